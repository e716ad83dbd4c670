//! Setting types and the concrete values that inhabit them.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HomeError;

/// Closed set of value types a device setting or sensor can carry.
///
/// In template JSON the scalar types are spelled `"bool"`, `"float"`,
/// `"int"`, `"str"` and `"time"`; an RGB color is the nested object
/// `{"r": "int", "g": "int", "b": "int"}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SettingType {
    Boolean,
    Float,
    Integer,
    String,
    TimeOfDay,
    ColorRgb,
}

impl SettingType {
    pub fn type_name(self) -> &'static str {
        match self {
            SettingType::Boolean => "bool",
            SettingType::Float => "float",
            SettingType::Integer => "int",
            SettingType::String => "str",
            SettingType::TimeOfDay => "time",
            SettingType::ColorRgb => "rgb",
        }
    }

    /// Parse the JSON spelling used in template documents.
    pub fn from_json(value: &Value) -> Result<Self, HomeError> {
        match value {
            Value::String(name) => match name.as_str() {
                "bool" => Ok(SettingType::Boolean),
                "float" => Ok(SettingType::Float),
                "int" => Ok(SettingType::Integer),
                "str" => Ok(SettingType::String),
                "time" => Ok(SettingType::TimeOfDay),
                other => Err(HomeError::UnknownSettingType(other.to_string())),
            },
            Value::Object(channels) => {
                let is_rgb = channels.len() == 3
                    && ["r", "g", "b"]
                        .iter()
                        .all(|c| channels.get(*c).and_then(Value::as_str) == Some("int"));
                if is_rgb {
                    Ok(SettingType::ColorRgb)
                } else {
                    Err(HomeError::UnknownSettingType(value.to_string()))
                }
            }
            other => Err(HomeError::UnknownSettingType(other.to_string())),
        }
    }

    pub fn to_json(self) -> Value {
        match self {
            SettingType::ColorRgb => serde_json::json!({"r": "int", "g": "int", "b": "int"}),
            scalar => Value::String(scalar.type_name().to_string()),
        }
    }

    /// Value every setting of this type takes in a freshly created home.
    pub fn default_value(self) -> SettingValue {
        match self {
            SettingType::Boolean => SettingValue::Bool(false),
            SettingType::Float => SettingValue::Float(0.0),
            SettingType::Integer => SettingValue::Int(0),
            SettingType::String => SettingValue::Str(String::new()),
            SettingType::TimeOfDay => SettingValue::Time(TimeOfDay::MIDNIGHT),
            SettingType::ColorRgb => SettingValue::Color(Rgb::WHITE),
        }
    }

    /// Coerce a JSON value into this type.
    ///
    /// Integers are accepted for floats, and integral floats for integers.
    /// Times are accepted in `H:MM(am|pm)` and `HH:MM[:SS]` forms. Nothing
    /// else is converted.
    pub fn coerce(self, value: &Value) -> Option<SettingValue> {
        match (self, value) {
            (SettingType::Boolean, Value::Bool(b)) => Some(SettingValue::Bool(*b)),
            (SettingType::Float, Value::Number(n)) => n.as_f64().map(SettingValue::Float),
            (SettingType::Integer, Value::Number(n)) => match n.as_i64() {
                Some(i) => Some(SettingValue::Int(i)),
                None => n
                    .as_f64()
                    .filter(|f| f.fract() == 0.0 && f.abs() < 9.0e15)
                    .map(|f| SettingValue::Int(f as i64)),
            },
            (SettingType::String, Value::String(s)) => Some(SettingValue::Str(s.clone())),
            (SettingType::TimeOfDay, Value::String(s)) => s.parse().ok().map(SettingValue::Time),
            (SettingType::ColorRgb, Value::Object(_)) => Rgb::from_json(value).map(SettingValue::Color),
            _ => None,
        }
    }
}

impl fmt::Display for SettingType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.type_name())
    }
}

impl Serialize for SettingType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SettingType::ColorRgb => {
                let mut map = serializer.serialize_map(Some(3))?;
                map.serialize_entry("r", "int")?;
                map.serialize_entry("g", "int")?;
                map.serialize_entry("b", "int")?;
                map.end()
            }
            scalar => serializer.serialize_str(scalar.type_name()),
        }
    }
}

impl<'de> Deserialize<'de> for SettingType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        SettingType::from_json(&value).map_err(de::Error::custom)
    }
}

/// Time of day with one-minute resolution, stored as minutes since midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeOfDay(u16);

impl TimeOfDay {
    pub const MIDNIGHT: TimeOfDay = TimeOfDay(0);

    pub fn from_hm(hour: u16, minute: u16) -> Option<Self> {
        (hour < 24 && minute < 60).then_some(TimeOfDay(hour * 60 + minute))
    }

    pub fn minutes(self) -> u16 {
        self.0
    }

    pub fn hour(self) -> u16 {
        self.0 / 60
    }

    pub fn minute(self) -> u16 {
        self.0 % 60
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.hour(), self.minute())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid time of day: {0:?}")]
pub struct TimeParseError(String);

impl FromStr for TimeOfDay {
    type Err = TimeParseError;

    /// Accepts `7:00am`, `9:00PM`, `5:00 PM`, `7am`, `07:00` and `07:00:30`.
    /// Seconds are truncated.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TimeParseError(s.to_string());
        let lower = s.trim().to_ascii_lowercase();
        let (clock, meridiem) = if let Some(rest) = lower.strip_suffix("am") {
            (rest.trim_end(), Some(false))
        } else if let Some(rest) = lower.strip_suffix("pm") {
            (rest.trim_end(), Some(true))
        } else {
            (lower.as_str(), None)
        };
        let mut parts = clock.split(':');
        let hour: u16 = parse_field(parts.next()).ok_or_else(err)?;
        let minute: u16 = match parts.next() {
            Some(m) if m.len() == 2 => parse_field(Some(m)).ok_or_else(err)?,
            Some(_) => return Err(err()),
            None if meridiem.is_some() => 0,
            None => return Err(err()),
        };
        if let Some(sec) = parts.next() {
            let sec: u16 = parse_field(Some(sec)).ok_or_else(err)?;
            if sec >= 60 || meridiem.is_some() {
                return Err(err());
            }
        }
        if parts.next().is_some() {
            return Err(err());
        }
        let hour = match meridiem {
            Some(pm) => {
                if hour == 0 || hour > 12 {
                    return Err(err());
                }
                (hour % 12) + if pm { 12 } else { 0 }
            }
            None => hour,
        };
        TimeOfDay::from_hm(hour, minute).ok_or_else(err)
    }
}

fn parse_field(part: Option<&str>) -> Option<u16> {
    let part = part?;
    if part.is_empty() || part.len() > 2 || !part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    part.parse().ok()
}

/// Three 8-bit color channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb {
    pub const WHITE: Rgb = Rgb { r: 255, g: 255, b: 255 };

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb { r, g, b }
    }

    fn from_json(value: &Value) -> Option<Self> {
        let obj = value.as_object()?;
        if obj.len() != 3 {
            return None;
        }
        let channel = |k: &str| -> Option<u8> {
            let n = obj.get(k)?.as_number()?;
            let v = n.as_i64().or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64))?;
            u8::try_from(v).ok()
        };
        Some(Rgb { r: channel("r")?, g: channel("g")?, b: channel("b")? })
    }
}

/// A concrete value for a setting or sensor reading.
#[derive(Debug, Clone, PartialEq)]
pub enum SettingValue {
    Bool(bool),
    Float(f64),
    Int(i64),
    Str(String),
    Time(TimeOfDay),
    Color(Rgb),
}

impl SettingValue {
    pub fn setting_type(&self) -> SettingType {
        match self {
            SettingValue::Bool(_) => SettingType::Boolean,
            SettingValue::Float(_) => SettingType::Float,
            SettingValue::Int(_) => SettingType::Integer,
            SettingValue::Str(_) => SettingType::String,
            SettingValue::Time(_) => SettingType::TimeOfDay,
            SettingValue::Color(_) => SettingType::ColorRgb,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            SettingValue::Bool(b) => Value::Bool(*b),
            SettingValue::Float(f) => serde_json::Number::from_f64(*f).map(Value::Number).unwrap_or(Value::Null),
            SettingValue::Int(i) => Value::from(*i),
            SettingValue::Str(s) => Value::String(s.clone()),
            SettingValue::Time(t) => Value::String(t.to_string()),
            SettingValue::Color(c) => serde_json::json!({"r": c.r, "g": c.g, "b": c.b}),
        }
    }
}

impl fmt::Display for SettingValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SettingValue::Str(s) => write!(f, "{s:?}"),
            SettingValue::Color(c) => write!(f, "rgb({}, {}, {})", c.r, c.g, c.b),
            other => write!(f, "{}", other.to_json()),
        }
    }
}

impl Serialize for SettingValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SettingValue::Bool(b) => serializer.serialize_bool(*b),
            SettingValue::Float(v) => serializer.serialize_f64(*v),
            SettingValue::Int(i) => serializer.serialize_i64(*i),
            SettingValue::Str(s) => serializer.serialize_str(s),
            SettingValue::Time(t) => serializer.collect_str(t),
            SettingValue::Color(c) => {
                let mut map = serializer.serialize_map(Some(3))?;
                map.serialize_entry("r", &c.r)?;
                map.serialize_entry("g", &c.g)?;
                map.serialize_entry("b", &c.b)?;
                map.end()
            }
        }
    }
}
