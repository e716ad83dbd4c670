//! Structural validity of raw model responses.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::home::HomeTemplate;

use super::extract::extract_json;
use super::model::GoalType;

/// Four-way structural verdict on a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityClass {
    Valid,
    /// Devices appear at the top level without their room wrapper.
    InvalidRoomsStripped,
    /// Rooms, devices, settings or sensors were added, moved or renamed.
    InvalidStructureMutated,
    /// No parseable JSON object.
    InvalidMalformed,
}

impl ValidityClass {
    pub const ALL: [ValidityClass; 4] = [
        ValidityClass::Valid,
        ValidityClass::InvalidRoomsStripped,
        ValidityClass::InvalidStructureMutated,
        ValidityClass::InvalidMalformed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ValidityClass::Valid => "valid",
            ValidityClass::InvalidRoomsStripped => "invalid_rooms_stripped",
            ValidityClass::InvalidStructureMutated => "invalid_structure_mutated",
            ValidityClass::InvalidMalformed => "invalid_malformed",
        }
    }
}

impl fmt::Display for ValidityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Verdict plus the signals behind it.
///
/// `also_mutated` is set when rooms were stripped and the structure was also
/// otherwise changed; the stripped verdict takes precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub class: ValidityClass,
    pub also_mutated: bool,
    pub findings: Vec<String>,
}

/// Classify raw model output against the template it was prompted with.
pub fn classify_validity(template: &HomeTemplate, raw: &str, goal: GoalType) -> ValidityClass {
    assess_validity(template, raw, goal).class
}

pub fn assess_validity(template: &HomeTemplate, raw: &str, goal: GoalType) -> ValidityReport {
    match extract_json(raw) {
        Some(json) => assess_json(template, &json, goal),
        None => ValidityReport {
            class: ValidityClass::InvalidMalformed,
            also_mutated: false,
            findings: vec!["no parseable JSON object".into()],
        },
    }
}

/// Classify an already-extracted JSON value.
pub fn assess_json(template: &HomeTemplate, json: &Value, goal: GoalType) -> ValidityReport {
    let Some(obj) = json.as_object() else {
        return ValidityReport {
            class: ValidityClass::InvalidMalformed,
            also_mutated: false,
            findings: vec!["top-level JSON is not an object".into()],
        };
    };
    let mut scan = Scan::default();
    match goal {
        GoalType::Immediate => scan.device_tree(template, obj, true),
        GoalType::Persistent => match (obj.get("trigger"), obj.get("action")) {
            (Some(trigger), Some(action)) => {
                scan.trigger(template, trigger);
                match action.as_object() {
                    Some(action) => scan.device_tree(template, action, false),
                    None => scan.mutated("action is not an object".into()),
                }
            }
            _ => {
                scan.mutated("routine lacks trigger or action".into());
                scan.device_tree(template, obj, true);
            }
        },
    }
    scan.finish()
}

#[derive(Default)]
struct Scan {
    stripped: bool,
    mutated: bool,
    findings: Vec<String>,
}

impl Scan {
    fn stripped(&mut self, finding: String) {
        self.stripped = true;
        self.findings.push(finding);
    }

    fn mutated(&mut self, finding: String) {
        self.mutated = true;
        self.findings.push(finding);
    }

    fn device_tree(&mut self, template: &HomeTemplate, doc: &Map<String, Value>, skip_explanation: bool) {
        for (key, node) in doc {
            if skip_explanation && key == "explanation" {
                continue;
            }
            let Some(room) = template.rooms.get(key) else {
                if !template.rooms_with_device(key).is_empty() {
                    self.stripped(format!("device {key} appears without its room"));
                } else {
                    self.mutated(format!("unknown room {key}"));
                }
                continue;
            };
            let Some(devices) = node.as_object() else {
                self.mutated(format!("room {key} is not an object"));
                continue;
            };
            for (device, settings) in devices {
                let Some(spec) = room.get(device) else {
                    self.mutated(format!("device {key}.{device} is not declared in that room"));
                    continue;
                };
                let Some(settings) = settings.as_object() else {
                    self.mutated(format!("device {key}.{device} is not an object"));
                    continue;
                };
                for setting in settings.keys() {
                    if spec.setting(setting).is_none() {
                        self.mutated(format!("unknown setting {key}.{device}.{setting}"));
                    }
                }
            }
        }
    }

    fn trigger(&mut self, template: &HomeTemplate, trigger: &Value) {
        let Some(scopes) = trigger.as_object() else {
            self.mutated("trigger is not an object".into());
            return;
        };
        for (scope, node) in scopes {
            let Some(sensors) = template.sensors.scope(scope) else {
                if template.sensors.contains_name(scope) {
                    self.stripped(format!("sensor {scope} appears without its scope"));
                } else {
                    self.mutated(format!("unknown sensor scope {scope}"));
                }
                continue;
            };
            let Some(node) = node.as_object() else {
                self.mutated(format!("sensor scope {scope} is not an object"));
                continue;
            };
            for name in node.keys() {
                if !sensors.contains_key(name) {
                    self.mutated(format!("unknown sensor {scope}.{name}"));
                }
            }
        }
    }

    fn finish(self) -> ValidityReport {
        let class = if self.stripped {
            ValidityClass::InvalidRoomsStripped
        } else if self.mutated {
            ValidityClass::InvalidStructureMutated
        } else {
            ValidityClass::Valid
        };
        ValidityReport { class, also_mutated: self.stripped && self.mutated, findings: self.findings }
    }
}
