//! Accepted-plan cache and the append-only bad-plan log.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::home::HomeTemplate;
use crate::llm::normalize_command;
use crate::plan::{parse_plan, ActionPlan, GoalType};

use super::ChainError;

pub const CACHE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub command: String,
    pub template_digest: String,
    pub goal: GoalType,
    pub plan: Value,
    pub accepted_at: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheFile {
    schema_version: u32,
    entries: BTreeMap<String, CacheEntry>,
}

/// User-accepted plans keyed by normalized command and template digest.
#[derive(Debug, Default)]
pub struct PlanCache {
    entries: RwLock<BTreeMap<String, CacheEntry>>,
    path: Option<PathBuf>,
}

impl PlanCache {
    pub fn in_memory() -> Self {
        PlanCache::default()
    }

    /// Backed by a JSON file that is rewritten on every store.
    pub fn open(path: &Path) -> Result<Self, ChainError> {
        let entries = if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| ChainError::Io(e.to_string()))?;
            let file: CacheFile = serde_json::from_str(&text).map_err(|e| ChainError::Io(e.to_string()))?;
            if file.schema_version != CACHE_SCHEMA_VERSION {
                return Err(ChainError::Io(format!("unsupported cache schema {}", file.schema_version)));
            }
            file.entries
        } else {
            BTreeMap::new()
        };
        Ok(PlanCache { entries: RwLock::new(entries), path: Some(path.to_path_buf()) })
    }

    pub fn key(command: &str, template_digest: &str) -> String {
        format!("{}\u{1f}{}", normalize_command(command), template_digest)
    }

    /// A hit only if the stored plan still parses against this template.
    pub fn lookup(&self, template: &HomeTemplate, command: &str, goal: GoalType) -> Option<ActionPlan> {
        let key = Self::key(command, &template.digest());
        let entries = self.entries.read().expect("cache lock");
        let entry = entries.get(&key)?;
        if entry.goal != goal {
            return None;
        }
        parse_plan(template, &entry.plan, goal).ok()
    }

    pub fn store(&self, template: &HomeTemplate, command: &str, plan: &ActionPlan) -> Result<(), ChainError> {
        let digest = template.digest();
        let entry = CacheEntry {
            command: normalize_command(command),
            template_digest: digest.clone(),
            goal: plan.goal_type(),
            plan: plan.to_json(),
            accepted_at: chrono::Utc::now().to_rfc3339(),
        };
        let mut entries = self.entries.write().expect("cache lock");
        entries.insert(Self::key(command, &digest), entry);
        if let Some(path) = &self.path {
            let file = CacheFile { schema_version: CACHE_SCHEMA_VERSION, entries: entries.clone() };
            let text = serde_json::to_string_pretty(&file).map_err(|e| ChainError::Io(e.to_string()))?;
            std::fs::write(path, text).map_err(|e| ChainError::Io(e.to_string()))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadPlanRecord {
    pub command: String,
    pub home_digest: String,
    pub plan: Value,
    pub critique: String,
    pub timestamp: String,
}

/// Rejected plans with the user's critique. Records are only ever appended.
#[derive(Debug, Default)]
pub struct BadPlanLog {
    records: Mutex<Vec<BadPlanRecord>>,
    path: Option<PathBuf>,
}

impl BadPlanLog {
    pub fn in_memory() -> Self {
        BadPlanLog::default()
    }

    /// Appends newline-delimited JSON to `path`; existing lines are kept.
    pub fn open(path: &Path) -> Result<Self, ChainError> {
        let mut records = Vec::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| ChainError::Io(e.to_string()))?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                records.push(serde_json::from_str(line).map_err(|e| ChainError::Io(e.to_string()))?);
            }
        }
        Ok(BadPlanLog { records: Mutex::new(records), path: Some(path.to_path_buf()) })
    }

    pub fn append(&self, record: BadPlanRecord) -> Result<(), ChainError> {
        let mut records = self.records.lock().expect("log lock");
        if let Some(path) = &self.path {
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| ChainError::Io(e.to_string()))?;
            let line = serde_json::to_string(&record).map_err(|e| ChainError::Io(e.to_string()))?;
            writeln!(file, "{line}").map_err(|e| ChainError::Io(e.to_string()))?;
        }
        records.push(record);
        Ok(())
    }

    pub fn records(&self) -> Vec<BadPlanRecord> {
        self.records.lock().expect("log lock").clone()
    }
}
