//! Typed action plans and their canonical JSON.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::home::{DeviceState, HomeTemplate, SettingPath, SettingValue, GLOBAL_SCOPE};

use super::PlanError;

/// Whether a command asks for an immediate change or an automation routine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalType {
    Immediate,
    Persistent,
}

impl GoalType {
    pub fn as_str(self) -> &'static str {
        match self {
            GoalType::Immediate => "immediate",
            GoalType::Persistent => "persistent",
        }
    }
}

impl fmt::Display for GoalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GoalType {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "immediate" => Ok(GoalType::Immediate),
            "persistent" => Ok(GoalType::Persistent),
            other => Err(PlanError::Shape(format!("unknown goal type {other:?}"))),
        }
    }
}

/// Address of a sensor: `global` or a room name, plus the sensor name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SensorPath {
    pub scope: String,
    pub name: String,
}

impl SensorPath {
    pub fn new(scope: impl Into<String>, name: impl Into<String>) -> Self {
        SensorPath { scope: scope.into(), name: name.into() }
    }

    pub fn global(name: impl Into<String>) -> Self {
        SensorPath::new(GLOBAL_SCOPE, name)
    }
}

impl fmt::Display for SensorPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.scope, self.name)
    }
}

/// Conjunctive sensor conditions that start a routine.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trigger {
    pub conditions: BTreeMap<SensorPath, SettingValue>,
}

impl Trigger {
    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn to_json(&self) -> Value {
        let mut doc = Map::new();
        for (path, value) in &self.conditions {
            doc.entry(path.scope.clone())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("scope node is an object")
                .insert(path.name.clone(), value.to_json());
        }
        Value::Object(doc)
    }
}

/// A machine-executable response to a command.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionPlan {
    /// Settings to assign now; only targeted devices appear.
    Immediate { assignments: DeviceState, explanation: String },
    /// A (trigger, action) routine.
    Routine { trigger: Trigger, action: DeviceState, explanation: String },
}

impl ActionPlan {
    pub fn goal_type(&self) -> GoalType {
        match self {
            ActionPlan::Immediate { .. } => GoalType::Immediate,
            ActionPlan::Routine { .. } => GoalType::Persistent,
        }
    }

    pub fn explanation(&self) -> &str {
        match self {
            ActionPlan::Immediate { explanation, .. } | ActionPlan::Routine { explanation, .. } => explanation,
        }
    }

    /// Device assignments: the whole plan for immediate goals, the action for routines.
    pub fn assignments(&self) -> &DeviceState {
        match self {
            ActionPlan::Immediate { assignments, .. } => assignments,
            ActionPlan::Routine { action, .. } => action,
        }
    }

    pub fn trigger(&self) -> Option<&Trigger> {
        match self {
            ActionPlan::Routine { trigger, .. } => Some(trigger),
            ActionPlan::Immediate { .. } => None,
        }
    }

    /// `(room, device)` pairs the plan assigns to, sorted and deduplicated.
    pub fn touched_devices(&self) -> Vec<(&str, &str)> {
        let mut devices: Vec<(&str, &str)> = self
            .assignments()
            .iter()
            .map(|(p, _)| (p.room.as_str(), p.device.as_str()))
            .collect();
        devices.dedup();
        devices
    }

    /// Canonical JSON. Immediate plans are the template-shaped subtree plus an
    /// `explanation` field; routines are `{"trigger", "action", "explanation"}`.
    pub fn to_json(&self) -> Value {
        match self {
            ActionPlan::Immediate { assignments, explanation } => {
                let mut doc = assignments.to_json();
                doc.as_object_mut()
                    .expect("state json is an object")
                    .insert("explanation".into(), Value::String(explanation.clone()));
                doc
            }
            ActionPlan::Routine { trigger, action, explanation } => serde_json::json!({
                "trigger": trigger.to_json(),
                "action": action.to_json(),
                "explanation": explanation,
            }),
        }
    }

    pub fn to_json_string(&self) -> String {
        self.to_json().to_string()
    }
}

/// Type a validated response into an [`ActionPlan`].
///
/// Devices given an empty settings object are treated as untouched.
pub fn parse_plan(template: &HomeTemplate, json: &Value, goal: GoalType) -> Result<ActionPlan, PlanError> {
    let obj = json.as_object().ok_or(PlanError::NotAnObject)?;
    let explanation = match obj.get("explanation") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    };
    match goal {
        GoalType::Immediate => {
            let assignments = parse_assignments(template, obj, true)?;
            if assignments.is_empty() {
                return Err(PlanError::EmptyPlan);
            }
            Ok(ActionPlan::Immediate { assignments, explanation })
        }
        GoalType::Persistent => {
            let trigger = obj.get("trigger").ok_or(PlanError::MissingField("trigger"))?;
            let action = obj.get("action").ok_or(PlanError::MissingField("action"))?;
            let trigger = parse_trigger(template, trigger)?;
            let action = parse_assignments(
                template,
                action.as_object().ok_or_else(|| PlanError::Shape("action must be an object".into()))?,
                false,
            )?;
            if trigger.is_empty() || action.is_empty() {
                return Err(PlanError::EmptyPlan);
            }
            Ok(ActionPlan::Routine { trigger, action, explanation })
        }
    }
}

pub(crate) fn parse_assignments(
    template: &HomeTemplate,
    doc: &Map<String, Value>,
    skip_explanation: bool,
) -> Result<DeviceState, PlanError> {
    let mut state = DeviceState::default();
    for (room, devices) in doc {
        if skip_explanation && room == "explanation" {
            continue;
        }
        let devices = devices
            .as_object()
            .ok_or_else(|| PlanError::Shape(format!("room {room} must be an object")))?;
        for (device, settings) in devices {
            let spec = template
                .device(room, device)
                .ok_or_else(|| PlanError::UnknownDevice(format!("{room}.{device}")))?;
            let settings = settings
                .as_object()
                .ok_or_else(|| PlanError::Shape(format!("device {room}.{device} must be an object")))?;
            for (setting, raw) in settings {
                let path = SettingPath::new(room, device, setting);
                let ty = spec.setting(setting).ok_or_else(|| PlanError::UnknownDevice(path.to_string()))?;
                let value = ty.coerce(raw).ok_or_else(|| PlanError::ValueTypeMismatch {
                    path: path.to_string(),
                    expected: ty.to_string(),
                    found: raw.to_string(),
                })?;
                state.set(path, value);
            }
        }
    }
    Ok(state)
}

fn parse_trigger(template: &HomeTemplate, doc: &Value) -> Result<Trigger, PlanError> {
    let scopes = doc.as_object().ok_or_else(|| PlanError::Shape("trigger must be an object".into()))?;
    let mut trigger = Trigger::default();
    for (scope, sensors) in scopes {
        let Some(sensors) = sensors.as_object() else {
            return Err(PlanError::UnknownSensorPath(scope.clone()));
        };
        for (name, raw) in sensors {
            let path = SensorPath::new(scope, name);
            let ty = template
                .sensors
                .get(scope, name)
                .ok_or_else(|| PlanError::UnknownSensorPath(path.to_string()))?;
            let value = ty.coerce(raw).ok_or_else(|| PlanError::ValueTypeMismatch {
                path: path.to_string(),
                expected: ty.to_string(),
                found: raw.to_string(),
            })?;
            trigger.conditions.insert(path, value);
        }
    }
    Ok(trigger)
}
