//! Parsers for step responses.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::home::HomeTemplate;
use crate::plan::{assess_json, extract_json, parse_plan, ActionPlan, GoalType, PlanError, SensorPath, ValidityClass};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeviceRef {
    pub room: String,
    pub device: String,
}

/// Parsed `RELEVANT:` line plus the remaining text as the user-facing utterance.
pub fn parse_verdict(raw: &str) -> Option<(bool, String)> {
    let mut verdict = None;
    let mut rest = Vec::new();
    for line in raw.lines() {
        let trimmed = line.trim();
        if verdict.is_none() {
            if let Some(value) = strip_label(trimmed, "RELEVANT:") {
                match value.trim_matches(|c: char| !c.is_alphanumeric()).to_ascii_lowercase().as_str() {
                    "true" | "yes" => verdict = Some(true),
                    "false" | "no" => verdict = Some(false),
                    _ => return None,
                }
                continue;
            }
        }
        rest.push(line);
    }
    verdict.map(|v| (v, rest.join("\n").trim().to_string()))
}

pub fn parse_goal_line(raw: &str) -> Option<GoalType> {
    raw.lines().find_map(|line| {
        let value = strip_label(line.trim(), "GOAL:")?;
        value.trim_matches(|c: char| !c.is_alphanumeric()).parse().ok()
    })
}

fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let head = line.get(..label.len())?;
    head.eq_ignore_ascii_case(label).then(|| line[label.len()..].trim())
}

/// A template-shaped device selection. Leaves are ignored.
pub fn parse_device_subset(template: &HomeTemplate, json: &Value) -> Result<Vec<DeviceRef>, String> {
    let report = assess_json(template, json, GoalType::Immediate);
    if report.class != ValidityClass::Valid {
        return Err(format!("selection does not match the devices document: {}", report.findings.join("; ")));
    }
    let doc = json.as_object().expect("valid selection is an object");
    let selected = |room: &str, device: &str| doc.get(room).and_then(|r| r.get(device)).is_some();
    Ok(template
        .devices()
        .filter(|(room, device, _)| selected(room, device))
        .map(|(room, device, _)| DeviceRef { room: room.to_string(), device: device.to_string() })
        .collect())
}

/// A sensors-document-shaped selection. Leaves are ignored.
pub fn parse_sensor_subset(template: &HomeTemplate, json: &Value) -> Result<Vec<SensorPath>, String> {
    let doc = json.as_object().ok_or("sensor selection is not an object")?;
    for (scope, node) in doc {
        if scope == "explanation" {
            continue;
        }
        let sensors = template
            .sensors
            .scope(scope)
            .ok_or_else(|| format!("unknown sensor scope {scope}"))?;
        let node = node.as_object().ok_or_else(|| format!("sensor scope {scope} is not an object"))?;
        if let Some(name) = node.keys().find(|n| !sensors.contains_key(*n)) {
            return Err(format!("unknown sensor {scope}.{name}"));
        }
    }
    Ok(template
        .sensors
        .iter()
        .filter(|(scope, name, _)| doc.get(*scope).and_then(|s| s.get(*name)).is_some())
        .map(|(scope, name, _)| SensorPath::new(scope, name))
        .collect())
}

/// Why a response was not accepted.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub message: String,
    pub validity: Option<ValidityClass>,
}

impl Rejection {
    pub fn new(message: impl Into<String>) -> Self {
        Rejection { message: message.into(), validity: None }
    }
}

/// `Ok(None)` means the model declined with an empty plan.
///
/// `allowed`, when given, is the subset the plan must stay within.
pub fn parse_plan_response(
    full: &HomeTemplate,
    allowed: Option<&HomeTemplate>,
    goal: GoalType,
    raw: &str,
) -> Result<(Option<ActionPlan>, ValidityClass), Rejection> {
    let Some(json) = extract_json(raw) else {
        return Err(Rejection {
            message: "the response contains no valid JSON object".into(),
            validity: Some(ValidityClass::InvalidMalformed),
        });
    };
    let report = assess_json(full, &json, goal);
    if report.class != ValidityClass::Valid {
        return Err(Rejection {
            message: format!("the JSON does not match the home: {}", report.findings.join("; ")),
            validity: Some(report.class),
        });
    }
    let plan = match parse_plan(full, &json, goal) {
        Ok(plan) => plan,
        Err(PlanError::EmptyPlan) => return Ok((None, ValidityClass::Valid)),
        Err(e) => return Err(Rejection { message: e.to_string(), validity: Some(ValidityClass::Valid) }),
    };
    if let Some(allowed) = allowed {
        if let Some(outside) = outside_subset(allowed, &plan) {
            return Err(Rejection {
                message: format!("plan outside the selected subset: {outside}"),
                validity: Some(ValidityClass::Valid),
            });
        }
    }
    Ok((Some(plan), ValidityClass::Valid))
}

/// First device or sensor the plan uses that `allowed` lacks.
pub fn outside_subset(allowed: &HomeTemplate, plan: &ActionPlan) -> Option<String> {
    if let Some((room, device)) = plan.touched_devices().into_iter().find(|(r, d)| allowed.device(r, d).is_none()) {
        return Some(format!("{room}.{device}"));
    }
    plan.trigger()?
        .conditions
        .keys()
        .find(|p| allowed.sensors.get(&p.scope, &p.name).is_none())
        .map(|p| p.to_string())
}
