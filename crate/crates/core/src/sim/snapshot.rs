//! Sensor snapshots and scripted timelines.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{Map, Value};

use crate::home::{HomeTemplate, SettingValue};
use crate::plan::SensorPath;

use super::SimError;

/// A reading of every sensor in a template at one instant.
///
/// Timestamps are seconds on an arbitrary monotone clock.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSnapshot {
    pub timestamp: i64,
    pub values: BTreeMap<SensorPath, SettingValue>,
}

impl SensorSnapshot {
    /// Checks totality and types against the template's sensor layout.
    pub fn new(
        template: &HomeTemplate,
        timestamp: i64,
        values: BTreeMap<SensorPath, SettingValue>,
    ) -> Result<Self, SimError> {
        for (path, value) in &values {
            let expected = template
                .sensors
                .get(&path.scope, &path.name)
                .ok_or_else(|| SimError::UnknownSensor(path.to_string()))?;
            if value.setting_type() != expected {
                return Err(SimError::TypeMismatch {
                    sensor: path.to_string(),
                    expected: expected.to_string(),
                    found: value.setting_type().to_string(),
                });
            }
        }
        if let Some((scope, name, _)) =
            template.sensors.iter().find(|(scope, name, _)| !values.contains_key(&SensorPath::new(*scope, *name)))
        {
            return Err(SimError::IncompleteSnapshot(SensorPath::new(scope, name).to_string()));
        }
        Ok(SensorSnapshot { timestamp, values })
    }

    /// Every sensor at its type's default reading.
    pub fn defaults(template: &HomeTemplate, timestamp: i64) -> Self {
        let values = template
            .sensors
            .iter()
            .map(|(scope, name, ty)| (SensorPath::new(scope, name), ty.default_value()))
            .collect();
        SensorSnapshot { timestamp, values }
    }

    pub fn get(&self, path: &SensorPath) -> Option<&SettingValue> {
        self.values.get(path)
    }

    /// Same readings at a later time.
    pub fn at(&self, timestamp: i64) -> Self {
        SensorSnapshot { timestamp, values: self.values.clone() }
    }

    /// Copy with one reading replaced. Types are not checked.
    pub fn with(mut self, path: SensorPath, value: SettingValue) -> Self {
        self.values.insert(path, value);
        self
    }

    /// Nested `{scope: {sensor: value}}` form.
    pub fn values_json(&self) -> Value {
        let mut doc = Map::new();
        for (path, value) in &self.values {
            doc.entry(path.scope.clone())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("scope node is an object")
                .insert(path.name.clone(), value.to_json());
        }
        Value::Object(doc)
    }

    pub fn to_json(&self) -> Value {
        serde_json::json!({"timestamp": self.timestamp, "sensors": self.values_json()})
    }
}

/// Typed readings from a nested `{scope: {sensor: value}}` object.
pub fn parse_sensor_values(template: &HomeTemplate, doc: &Value) -> Result<BTreeMap<SensorPath, SettingValue>, SimError> {
    let scopes = doc.as_object().ok_or_else(|| SimError::Timeline("sensors must be an object".into()))?;
    let mut values = BTreeMap::new();
    for (scope, node) in scopes {
        let node = node.as_object().ok_or_else(|| SimError::Timeline(format!("scope {scope} must be an object")))?;
        for (name, raw) in node {
            let path = SensorPath::new(scope.as_str(), name.as_str());
            let expected =
                template.sensors.get(scope, name).ok_or_else(|| SimError::UnknownSensor(path.to_string()))?;
            let value = expected.coerce(raw).ok_or_else(|| SimError::TypeMismatch {
                sensor: path.to_string(),
                expected: expected.to_string(),
                found: raw.to_string(),
            })?;
            values.insert(path, value);
        }
    }
    Ok(values)
}

/// Snapshots with strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timeline {
    pub snapshots: Vec<SensorSnapshot>,
}

impl Timeline {
    pub fn new(snapshots: Vec<SensorSnapshot>) -> Result<Self, SimError> {
        for pair in snapshots.windows(2) {
            if pair[1].timestamp <= pair[0].timestamp {
                return Err(SimError::NonMonotonic { previous: pair[0].timestamp, next: pair[1].timestamp });
            }
        }
        Ok(Timeline { snapshots })
    }

    /// A JSON array of `{"timestamp": n, "sensors": {...}}`.
    ///
    /// The first entry must be total. Later entries may list only the
    /// readings that change; the rest carry over.
    pub fn from_json(template: &HomeTemplate, doc: &Value) -> Result<Self, SimError> {
        let entries = doc.as_array().ok_or_else(|| SimError::Timeline("timeline must be an array".into()))?;
        let mut snapshots: Vec<SensorSnapshot> = Vec::with_capacity(entries.len());
        for (i, entry) in entries.iter().enumerate() {
            let timestamp = entry
                .get("timestamp")
                .and_then(Value::as_i64)
                .ok_or_else(|| SimError::Timeline(format!("entry {i} lacks an integer timestamp")))?;
            let readings = parse_sensor_values(template, entry.get("sensors").unwrap_or(&Value::Null))?;
            let mut values = snapshots.last().map(|s| s.values.clone()).unwrap_or_default();
            values.extend(readings);
            snapshots.push(SensorSnapshot::new(template, timestamp, values)?);
        }
        Timeline::new(snapshots)
    }

    pub fn load(template: &HomeTemplate, path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Timeline(format!("{}: {e}", path.display())))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| SimError::Timeline(e.to_string()))?;
        Timeline::from_json(template, &doc)
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::home::{builtin_home, BuiltinHomeId, TimeOfDay};
    use serde_json::json;

    #[test]
    fn timeline_carries_readings_forward() {
        let t = builtin_home(BuiltinHomeId::H1);
        let first = SensorSnapshot::defaults(&t, 0).to_json();
        let doc = json!([first, {"timestamp": 60, "sensors": {"global": {"local_time": "07:00:30"}}}]);
        let tl = Timeline::from_json(&t, &doc).unwrap();
        assert_eq!(tl.len(), 2);
        assert_eq!(
            tl.snapshots[1].get(&SensorPath::global("local_time")),
            Some(&SettingValue::Time(TimeOfDay::from_hm(7, 0).unwrap()))
        );
        assert_eq!(tl.snapshots[1].values.len(), tl.snapshots[0].values.len());

        let partial = json!([{"timestamp": 0, "sensors": {"global": {"local_time": "07:00"}}}]);
        assert!(matches!(Timeline::from_json(&t, &partial), Err(SimError::IncompleteSnapshot(_))));
        let backwards = json!([first, {"timestamp": 0, "sensors": {}}]);
        assert!(matches!(Timeline::from_json(&t, &backwards), Err(SimError::NonMonotonic { .. })));
        let mistyped = json!([first, {"timestamp": 5, "sensors": {"global": {"local_time": 7}}}]);
        assert!(matches!(Timeline::from_json(&t, &mistyped), Err(SimError::TypeMismatch { .. })));
    }
}
