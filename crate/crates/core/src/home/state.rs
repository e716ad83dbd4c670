//! Concrete device state over a template.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::template::HomeTemplate;
use super::value::{SettingType, SettingValue};
use super::HomeError;

/// Address of one device setting.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SettingPath {
    pub room: String,
    pub device: String,
    pub setting: String,
}

impl SettingPath {
    pub fn new(room: impl Into<String>, device: impl Into<String>, setting: impl Into<String>) -> Self {
        SettingPath { room: room.into(), device: device.into(), setting: setting.into() }
    }
}

impl fmt::Display for SettingPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.room, self.device, self.setting)
    }
}

/// Setting values keyed by path. A complete state covers every setting of
/// every device in its template.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeviceState {
    values: BTreeMap<SettingPath, SettingValue>,
}

impl DeviceState {
    /// Every setting at its type's default.
    pub fn initial(template: &HomeTemplate) -> Self {
        let values = template
            .devices()
            .flat_map(|(room, device, spec)| {
                spec.settings
                    .iter()
                    .map(move |(setting, ty)| (SettingPath::new(room, device, setting), ty.default_value()))
            })
            .collect();
        DeviceState { values }
    }

    pub fn get(&self, path: &SettingPath) -> Option<&SettingValue> {
        self.values.get(path)
    }

    pub fn value(&self, room: &str, device: &str, setting: &str) -> Option<&SettingValue> {
        self.values.get(&SettingPath::new(room, device, setting))
    }

    /// Sets a value and returns the previous one.
    pub fn set(&mut self, path: SettingPath, value: SettingValue) -> Option<SettingValue> {
        self.values.insert(path, value)
    }

    pub fn remove(&mut self, path: &SettingPath) -> Option<SettingValue> {
        self.values.remove(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SettingPath, &SettingValue)> {
        self.values.iter()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Template-shaped JSON: `{room: {device: {setting: value}}}`.
    pub fn to_json(&self) -> Value {
        let mut doc = Map::new();
        for (path, value) in &self.values {
            let room = doc.entry(path.room.clone()).or_insert_with(|| Value::Object(Map::new()));
            let device = room
                .as_object_mut()
                .expect("room node is an object")
                .entry(path.device.clone())
                .or_insert_with(|| Value::Object(Map::new()));
            device
                .as_object_mut()
                .expect("device node is an object")
                .insert(path.setting.clone(), value.to_json());
        }
        Value::Object(doc)
    }

    /// Read a template-shaped document, typing each value through the template.
    pub fn from_json(template: &HomeTemplate, doc: &Value) -> Result<Self, HomeError> {
        let mut state = DeviceState::default();
        let rooms = doc.as_object().ok_or_else(|| HomeError::Shape("state must be an object".into()))?;
        for (room, devices) in rooms {
            let devices = devices
                .as_object()
                .ok_or_else(|| HomeError::Shape(format!("state room {room} must be an object")))?;
            for (device, settings) in devices {
                let settings = settings
                    .as_object()
                    .ok_or_else(|| HomeError::Shape(format!("state device {room}.{device} must be an object")))?;
                for (setting, raw) in settings {
                    let path = SettingPath::new(room, device, setting);
                    let ty = template
                        .setting_type(room, device, setting)
                        .ok_or_else(|| HomeError::Shape(format!("unknown setting {path}")))?;
                    let value = ty
                        .coerce(raw)
                        .ok_or_else(|| HomeError::Shape(format!("{path}: {raw} is not a {ty}")))?;
                    state.set(path, value);
                }
            }
        }
        Ok(state)
    }
}

/// Reason a state fails to match its template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateViolation {
    TypeMismatch { path: SettingPath, expected: String, found: String },
    Incomplete { path: SettingPath },
    UnknownSetting { path: SettingPath },
}

/// Empty result means the state is total and type-correct for the template.
pub fn validate_state(template: &HomeTemplate, state: &DeviceState) -> Vec<StateViolation> {
    let mut violations = Vec::new();
    for (room, device, spec) in template.devices() {
        for (setting, ty) in &spec.settings {
            let path = SettingPath::new(room, device, setting);
            match state.get(&path) {
                None => violations.push(StateViolation::Incomplete { path }),
                Some(value) if !conforms(*ty, value) => violations.push(StateViolation::TypeMismatch {
                    path,
                    expected: ty.to_string(),
                    found: value.setting_type().to_string(),
                }),
                Some(_) => {}
            }
        }
    }
    for (path, _) in state.iter() {
        if template.setting_type(&path.room, &path.device, &path.setting).is_none() {
            violations.push(StateViolation::UnknownSetting { path: path.clone() });
        }
    }
    violations
}

fn conforms(ty: SettingType, value: &SettingValue) -> bool {
    value.setting_type() == ty
}
