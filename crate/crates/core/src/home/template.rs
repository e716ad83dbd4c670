//! The two-document home template: controllable devices and sensors.

use std::fmt;

use indexmap::IndexMap;
use serde::de::{self, Deserializer, MapAccess, SeqAccess, Visitor};
use serde::Deserialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::value::SettingType;
use super::HomeError;

/// Reserved sensor scope for home-wide readings such as the local time.
pub const GLOBAL_SCOPE: &str = "global";

/// A controllable device: setting name to setting type, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceSpec {
    pub settings: IndexMap<String, SettingType>,
}

impl DeviceSpec {
    pub fn setting(&self, name: &str) -> Option<SettingType> {
        self.settings.get(name).copied()
    }
}

/// Sensor layout: a global scope plus per-room scopes. Sensors are read-only.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SensorLayout {
    pub global: IndexMap<String, SettingType>,
    pub rooms: IndexMap<String, IndexMap<String, SettingType>>,
}

impl SensorLayout {
    pub fn scope(&self, scope: &str) -> Option<&IndexMap<String, SettingType>> {
        if scope == GLOBAL_SCOPE {
            Some(&self.global)
        } else {
            self.rooms.get(scope)
        }
    }

    pub fn get(&self, scope: &str, name: &str) -> Option<SettingType> {
        self.scope(scope)?.get(name).copied()
    }

    /// Every sensor as `(scope, name, type)`, global first.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, SettingType)> {
        self.global
            .iter()
            .map(|(n, t)| (GLOBAL_SCOPE, n.as_str(), *t))
            .chain(self.rooms.iter().flat_map(|(room, sensors)| {
                sensors.iter().map(move |(n, t)| (room.as_str(), n.as_str(), *t))
            }))
    }

    pub fn len(&self) -> usize {
        self.global.len() + self.rooms.values().map(IndexMap::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Names that appear as a sensor in any scope.
    pub fn contains_name(&self, name: &str) -> bool {
        self.global.contains_key(name) || self.rooms.values().any(|s| s.contains_key(name))
    }

    fn to_value(&self) -> Value {
        let mut doc = Map::new();
        if !self.global.is_empty() || self.rooms.is_empty() {
            doc.insert(GLOBAL_SCOPE.to_string(), settings_value(&self.global));
        }
        for (room, sensors) in &self.rooms {
            doc.insert(room.clone(), settings_value(sensors));
        }
        Value::Object(doc)
    }
}

/// A home: rooms containing named devices, plus the sensor layout.
///
/// Immutable once built. Maps keep declaration order for prompt rendering;
/// equality and the canonical encoding ignore order.
#[derive(Debug, Clone)]
pub struct HomeTemplate {
    label: Option<String>,
    pub rooms: IndexMap<String, IndexMap<String, DeviceSpec>>,
    pub sensors: SensorLayout,
}

impl PartialEq for HomeTemplate {
    fn eq(&self, other: &Self) -> bool {
        self.rooms == other.rooms && self.sensors == other.sensors
    }
}

impl HomeTemplate {
    /// Parse and validate the devices and sensors documents.
    pub fn parse(devices_json: &str, sensors_json: &str) -> Result<Self, HomeError> {
        let devices = parse_raw(devices_json, "devices")?;
        let sensors = parse_raw(sensors_json, "sensors")?;
        Self::from_raw(devices, sensors)
    }

    /// Parse from already-decoded JSON values.
    ///
    /// Duplicate keys cannot be detected here since `Value` has already merged them.
    pub fn from_values(devices: &Value, sensors: &Value) -> Result<Self, HomeError> {
        Self::from_raw(RawNode::from_value(devices), RawNode::from_value(sensors))
    }

    fn from_raw(devices: RawNode, sensors: RawNode) -> Result<Self, HomeError> {
        let mut rooms: IndexMap<String, IndexMap<String, DeviceSpec>> = IndexMap::new();
        for (room, node) in devices.into_entries("devices")? {
            check_name(&room, "room")?;
            if room == GLOBAL_SCOPE {
                return Err(HomeError::ReservedName(room));
            }
            let mut devices = IndexMap::new();
            for (device, node) in node.into_entries(&room)? {
                check_name(&device, "device")?;
                let path = format!("{room}.{device}");
                let mut settings = IndexMap::new();
                for (setting, node) in node.into_entries(&path)? {
                    check_name(&setting, "setting")?;
                    let ty = SettingType::from_json(&node.into_value())?;
                    if settings.insert(setting.clone(), ty).is_some() {
                        return Err(HomeError::DuplicateName(format!("{path}.{setting}")));
                    }
                }
                if settings.is_empty() {
                    return Err(HomeError::EmptyDevice(path));
                }
                if devices.insert(device.clone(), DeviceSpec { settings }).is_some() {
                    return Err(HomeError::DuplicateName(path));
                }
            }
            if rooms.insert(room.clone(), devices).is_some() {
                return Err(HomeError::DuplicateName(room));
            }
        }

        let mut layout = SensorLayout::default();
        let mut seen_scopes = Vec::new();
        for (scope, node) in sensors.into_entries("sensors")? {
            check_name(&scope, "sensor scope")?;
            if seen_scopes.contains(&scope) {
                return Err(HomeError::DuplicateName(scope));
            }
            seen_scopes.push(scope.clone());
            if scope != GLOBAL_SCOPE && !rooms.contains_key(&scope) {
                return Err(HomeError::SensorRoomUnknown(scope));
            }
            let mut entries = IndexMap::new();
            for (name, node) in node.into_entries(&scope)? {
                check_name(&name, "sensor")?;
                let ty = SettingType::from_json(&node.into_value())?;
                if entries.insert(name.clone(), ty).is_some() {
                    return Err(HomeError::DuplicateName(format!("{scope}.{name}")));
                }
            }
            if scope == GLOBAL_SCOPE {
                layout.global = entries;
            } else {
                layout.rooms.insert(scope, entries);
            }
        }
        Ok(HomeTemplate { label: None, rooms, sensors: layout })
    }

    pub fn empty() -> Self {
        HomeTemplate { label: None, rooms: IndexMap::new(), sensors: SensorLayout::default() }
    }

    /// Short name used to identify the home in fixtures and reports (e.g. `h1`).
    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn device(&self, room: &str, device: &str) -> Option<&DeviceSpec> {
        self.rooms.get(room)?.get(device)
    }

    pub fn setting_type(&self, room: &str, device: &str, setting: &str) -> Option<SettingType> {
        self.device(room, device)?.setting(setting)
    }

    /// Every device as `(room, name, spec)` in declaration order.
    pub fn devices(&self) -> impl Iterator<Item = (&str, &str, &DeviceSpec)> {
        self.rooms.iter().flat_map(|(room, devices)| {
            devices.iter().map(move |(name, spec)| (room.as_str(), name.as_str(), spec))
        })
    }

    pub fn device_count(&self) -> usize {
        self.rooms.values().map(IndexMap::len).sum()
    }

    /// Rooms that contain a device with this name.
    pub fn rooms_with_device(&self, device: &str) -> Vec<&str> {
        self.rooms
            .iter()
            .filter(|(_, devices)| devices.contains_key(device))
            .map(|(room, _)| room.as_str())
            .collect()
    }

    /// A template containing only the selected `(room, device)` pairs, keeping
    /// their full setting specs. Unknown pairs are ignored; sensors are kept.
    pub fn device_subset<'a>(&self, selection: impl IntoIterator<Item = (&'a str, &'a str)>) -> HomeTemplate {
        let selection: Vec<(&str, &str)> = selection.into_iter().collect();
        let mut rooms = IndexMap::new();
        for (room, devices) in &self.rooms {
            let kept: IndexMap<String, DeviceSpec> = devices
                .iter()
                .filter(|(name, _)| selection.contains(&(room.as_str(), name.as_str())))
                .map(|(name, spec)| (name.clone(), spec.clone()))
                .collect();
            if !kept.is_empty() {
                rooms.insert(room.clone(), kept);
            }
        }
        HomeTemplate { label: self.label.clone(), rooms, sensors: self.sensors.clone() }
    }

    /// The same devices with only the selected `(scope, name)` sensors.
    pub fn sensor_subset<'a>(&self, selection: impl IntoIterator<Item = (&'a str, &'a str)>) -> HomeTemplate {
        let selection: Vec<(&str, &str)> = selection.into_iter().collect();
        let keep = |scope: &str, sensors: &IndexMap<String, SettingType>| -> IndexMap<String, SettingType> {
            sensors
                .iter()
                .filter(|(name, _)| selection.contains(&(scope, name.as_str())))
                .map(|(n, t)| (n.clone(), *t))
                .collect()
        };
        let global = keep(GLOBAL_SCOPE, &self.sensors.global);
        let rooms = self
            .sensors
            .rooms
            .iter()
            .map(|(room, sensors)| (room.clone(), keep(room, sensors)))
            .filter(|(_, s)| !s.is_empty())
            .collect();
        HomeTemplate {
            label: self.label.clone(),
            rooms: self.rooms.clone(),
            sensors: SensorLayout { global, rooms },
        }
    }

    /// Devices document in declaration order, as a JSON value.
    pub fn devices_value(&self) -> Value {
        let mut doc = Map::new();
        for (room, devices) in &self.rooms {
            let mut room_doc = Map::new();
            for (name, spec) in devices {
                room_doc.insert(name.clone(), settings_value(&spec.settings));
            }
            doc.insert(room.clone(), Value::Object(room_doc));
        }
        Value::Object(doc)
    }

    pub fn sensors_value(&self) -> Value {
        self.sensors.to_value()
    }

    /// Devices document pretty-printed in declaration order, for prompts.
    pub fn devices_pretty(&self) -> String {
        pretty_ordered(&OrderedDevices(self))
    }

    /// Sensors document pretty-printed in declaration order, for prompts.
    pub fn sensors_pretty(&self) -> String {
        pretty_ordered(&OrderedSensors(&self.sensors))
    }

    /// Canonical `(devices, sensors)` documents: compact, keys sorted.
    pub fn to_canonical_documents(&self) -> (String, String) {
        (self.devices_value().to_string(), self.sensors_value().to_string())
    }

    /// Canonical single-document encoding `{"devices": ..., "sensors": ...}`.
    pub fn canonical_json(&self) -> String {
        serde_json::json!({"devices": self.devices_value(), "sensors": self.sensors_value()}).to_string()
    }

    /// SHA-256 of the canonical encoding, hex encoded.
    pub fn digest(&self) -> String {
        digest_hex(self.canonical_json().as_bytes())
    }
}

/// SHA-256, hex encoded.
pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes).as_slice())
}

fn settings_value(settings: &IndexMap<String, SettingType>) -> Value {
    Value::Object(settings.iter().map(|(k, t)| (k.clone(), t.to_json())).collect())
}

fn check_name(name: &str, what: &str) -> Result<(), HomeError> {
    if name.trim().is_empty() {
        Err(HomeError::EmptyName(what.to_string()))
    } else {
        Ok(())
    }
}

struct OrderedDevices<'a>(&'a HomeTemplate);
struct OrderedSensors<'a>(&'a SensorLayout);

impl serde::Serialize for OrderedDevices<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rooms: IndexMap<&str, IndexMap<&str, &IndexMap<String, SettingType>>> = self
            .0
            .rooms
            .iter()
            .map(|(room, devices)| {
                (room.as_str(), devices.iter().map(|(n, spec)| (n.as_str(), &spec.settings)).collect())
            })
            .collect();
        rooms.serialize(s)
    }
}

impl serde::Serialize for OrderedSensors<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut doc: IndexMap<&str, &IndexMap<String, SettingType>> = IndexMap::new();
        if !self.0.global.is_empty() || self.0.rooms.is_empty() {
            doc.insert(GLOBAL_SCOPE, &self.0.global);
        }
        for (room, sensors) in &self.0.rooms {
            doc.insert(room.as_str(), sensors);
        }
        doc.serialize(s)
    }
}

fn pretty_ordered<T: serde::Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let formatter = serde_json::ser::PrettyFormatter::with_indent(b"    ");
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, formatter);
    value.serialize(&mut ser).expect("template serialization is infallible");
    String::from_utf8(buf).expect("serde_json emits utf-8")
}

fn parse_raw(text: &str, doc: &str) -> Result<RawNode, HomeError> {
    serde_json::from_str(text).map_err(|e| HomeError::Syntax { document: doc.to_string(), message: e.to_string() })
}

/// JSON tree that keeps duplicate object keys so they can be reported.
#[derive(Debug)]
enum RawNode {
    Leaf(Value),
    Map(Vec<(String, RawNode)>),
}

impl RawNode {
    fn from_value(value: &Value) -> RawNode {
        match value {
            Value::Object(map) => {
                RawNode::Map(map.iter().map(|(k, v)| (k.clone(), RawNode::from_value(v))).collect())
            }
            other => RawNode::Leaf(other.clone()),
        }
    }

    fn into_entries(self, at: &str) -> Result<Vec<(String, RawNode)>, HomeError> {
        match self {
            RawNode::Map(entries) => Ok(entries),
            RawNode::Leaf(v) => Err(HomeError::Shape(format!("expected an object at {at}, found {v}"))),
        }
    }

    fn into_value(self) -> Value {
        match self {
            RawNode::Leaf(v) => v,
            RawNode::Map(entries) => {
                Value::Object(entries.into_iter().map(|(k, v)| (k, v.into_value())).collect())
            }
        }
    }
}

impl<'de> Deserialize<'de> for RawNode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(RawVisitor)
    }
}

struct RawVisitor;

impl<'de> Visitor<'de> for RawVisitor {
    type Value = RawNode;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("any JSON value")
    }

    fn visit_bool<E: de::Error>(self, v: bool) -> Result<RawNode, E> {
        Ok(RawNode::Leaf(Value::Bool(v)))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<RawNode, E> {
        Ok(RawNode::Leaf(Value::from(v)))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<RawNode, E> {
        Ok(RawNode::Leaf(Value::from(v)))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<RawNode, E> {
        Ok(RawNode::Leaf(Value::from(v)))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<RawNode, E> {
        Ok(RawNode::Leaf(Value::String(v.to_string())))
    }

    fn visit_unit<E: de::Error>(self) -> Result<RawNode, E> {
        Ok(RawNode::Leaf(Value::Null))
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<RawNode, A::Error> {
        let mut items = Vec::new();
        while let Some(item) = seq.next_element::<RawNode>()? {
            items.push(item.into_value());
        }
        Ok(RawNode::Leaf(Value::Array(items)))
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<RawNode, A::Error> {
        let mut entries = Vec::new();
        while let Some((k, v)) = map.next_entry::<String, RawNode>()? {
            entries.push((k, v));
        }
        Ok(RawNode::Map(entries))
    }
}
