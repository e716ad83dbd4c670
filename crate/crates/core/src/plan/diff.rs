//! Human-facing summary of what a plan would change.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::home::{HomeTemplate, SettingType};

use super::model::ActionPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedChange {
    pub room: String,
    pub device: String,
    pub setting: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerCondition {
    pub scope: String,
    pub sensor: String,
    pub value: Value,
    /// String-typed sensor matched by substring rather than a typed value.
    pub free_form: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDiff {
    pub changes: Vec<PlannedChange>,
    pub triggers: Vec<TriggerCondition>,
    pub touched_devices: usize,
    pub touched_rooms: BTreeSet<String>,
    pub explanation: String,
}

impl PlanDiff {
    pub fn has_free_form_trigger(&self) -> bool {
        self.triggers.iter().any(|t| t.free_form)
    }
}

pub fn diff_plan(template: &HomeTemplate, plan: &ActionPlan) -> PlanDiff {
    let changes = plan
        .assignments()
        .iter()
        .map(|(path, value)| PlannedChange {
            room: path.room.clone(),
            device: path.device.clone(),
            setting: path.setting.clone(),
            value: value.to_json(),
        })
        .collect();
    let triggers = plan
        .trigger()
        .map(|trigger| {
            trigger
                .conditions
                .iter()
                .map(|(path, value)| TriggerCondition {
                    scope: path.scope.clone(),
                    sensor: path.name.clone(),
                    value: value.to_json(),
                    free_form: template.sensors.get(&path.scope, &path.name) == Some(SettingType::String),
                })
                .collect()
        })
        .unwrap_or_default();
    let touched = plan.touched_devices();
    PlanDiff {
        changes,
        triggers,
        touched_devices: touched.len(),
        touched_rooms: touched.iter().map(|(room, _)| room.to_string()).collect(),
        explanation: plan.explanation().to_string(),
    }
}
