//! The 40-command dataset and goal categories.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::home::DeviceTag;
use crate::plan::GoalType;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GoalCategory {
    Temperature,
    Lighting,
    Security,
    EnergySaving,
    Mood,
    RobotControl,
    OtherAppliances,
}

impl GoalCategory {
    pub const ALL: [GoalCategory; 7] = [
        GoalCategory::Temperature,
        GoalCategory::Lighting,
        GoalCategory::Security,
        GoalCategory::EnergySaving,
        GoalCategory::Mood,
        GoalCategory::RobotControl,
        GoalCategory::OtherAppliances,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GoalCategory::Temperature => "Temperature",
            GoalCategory::Lighting => "Lighting",
            GoalCategory::Security => "Security",
            GoalCategory::EnergySaving => "EnergySaving",
            GoalCategory::Mood => "Mood",
            GoalCategory::RobotControl => "RobotControl",
            GoalCategory::OtherAppliances => "OtherAppliances",
        }
    }
}

impl fmt::Display for GoalCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GoalCategory {
    type Err = EvalError;

    /// Case, spaces and underscores are ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_ascii_lowercase();
        GoalCategory::ALL
            .into_iter()
            .find(|c| c.as_str().to_ascii_lowercase() == key)
            .ok_or_else(|| EvalError::DatasetCorrupt(format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub command: String,
    #[serde(default)]
    pub example_routine: String,
    pub goal_type: GoalType,
    pub category: GoalCategory,
}

#[derive(Deserialize)]
struct DatasetFile {
    version: u32,
    commands: Vec<CommandRecord>,
}

pub const EXPECTED_CATEGORY_COUNTS: [(GoalCategory, usize); 7] = [
    (GoalCategory::Temperature, 6),
    (GoalCategory::Lighting, 6),
    (GoalCategory::Security, 6),
    (GoalCategory::EnergySaving, 4),
    (GoalCategory::Mood, 6),
    (GoalCategory::RobotControl, 6),
    (GoalCategory::OtherAppliances, 6),
];
pub const EXPECTED_IMMEDIATE: usize = 18;
pub const EXPECTED_PERSISTENT: usize = 22;

const BUILTIN_DATASET: &str = include_str!("../../fixtures/commands.json");

/// The shipped dataset, validated.
pub fn load_commands() -> Result<Vec<CommandRecord>, EvalError> {
    parse_commands(BUILTIN_DATASET)
}

/// A dataset file in JSON (`{"version", "commands": [...]}`) or CSV with
/// columns `command,example_routine,goal_type,category`.
pub fn load_commands_from(path: &Path) -> Result<Vec<CommandRecord>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let records = reader
            .deserialize()
            .collect::<Result<Vec<CommandRecord>, _>>()
            .map_err(|e| EvalError::DatasetCorrupt(e.to_string()))?;
        validate_commands(&records)?;
        Ok(records)
    } else {
        parse_commands(&text)
    }
}

pub fn parse_commands(json: &str) -> Result<Vec<CommandRecord>, EvalError> {
    let file: DatasetFile = serde_json::from_str(json).map_err(|e| EvalError::DatasetCorrupt(e.to_string()))?;
    if file.version != 1 {
        return Err(EvalError::DatasetCorrupt(format!("unsupported dataset version {}", file.version)));
    }
    validate_commands(&file.commands)?;
    Ok(file.commands)
}

/// Uniqueness, size, category and goal-type distribution.
pub fn validate_commands(records: &[CommandRecord]) -> Result<(), EvalError> {
    let corrupt = |m: String| Err(EvalError::DatasetCorrupt(m));
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(r.command.trim().to_lowercase()) {
            return corrupt(format!("duplicate command {:?}", r.command));
        }
    }
    if records.len() != 40 {
        return corrupt(format!("expected 40 commands, found {}", records.len()));
    }
    let mut counts: BTreeMap<GoalCategory, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(r.category).or_default() += 1;
    }
    for (category, expected) in EXPECTED_CATEGORY_COUNTS {
        let found = counts.get(&category).copied().unwrap_or(0);
        if found != expected {
            return corrupt(format!("{category}: expected {expected} commands, found {found}"));
        }
    }
    let immediate = records.iter().filter(|r| r.goal_type == GoalType::Immediate).count();
    if immediate != EXPECTED_IMMEDIATE || records.len() - immediate != EXPECTED_PERSISTENT {
        return corrupt(format!("expected 18 immediate / 22 persistent, found {immediate} immediate"));
    }
    if let Some(r) =
        records.iter().find(|r| r.category == GoalCategory::EnergySaving && r.goal_type != GoalType::Persistent)
    {
        return corrupt(format!("energy-saving command {:?} must be persistent", r.command));
    }
    Ok(())
}

/// Device types that can serve each category's goals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTypeMap {
    pub version: u32,
    /// `"*"` accepts any device.
    pub relevant_types: BTreeMap<GoalCategory, Vec<String>>,
}

impl CategoryTypeMap {
    pub fn builtin() -> Self {
        Self::from_json(include_str!("../../fixtures/category_device_types.json")).expect("shipped map is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let map: CategoryTypeMap = serde_json::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        for category in GoalCategory::ALL {
            let types = map
                .relevant_types
                .get(&category)
                .ok_or_else(|| EvalError::Config(format!("no device types for {category}")))?;
            for t in types.iter().filter(|t| t.as_str() != "*") {
                t.parse::<DeviceTag>().map_err(|e| EvalError::Config(e.to_string()))?;
            }
        }
        Ok(map)
    }

    /// `tag` is `None` for a device name the lexicon cannot place.
    pub fn is_relevant(&self, category: GoalCategory, tag: Option<DeviceTag>) -> bool {
        self.relevant_types
            .get(&category)
            .is_some_and(|types| types.iter().any(|t| t == "*" || tag.is_some_and(|tag| tag.as_str() == t)))
    }
}
