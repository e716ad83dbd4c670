//! Home templates: rooms, devices, typed settings and sensors.

mod builtin;
mod catalog;
mod state;
mod template;
mod value;

pub use builtin::{builtin_home, load_template_dir, studio_apartment, BuiltinHomeId};
pub use catalog::{device_catalog, CatalogEntry, DeviceTag, Lexicon};
pub use state::{validate_state, DeviceState, SettingPath, StateViolation};
pub use template::{DeviceSpec, HomeTemplate, SensorLayout, GLOBAL_SCOPE};
pub use template::digest_hex;
pub use value::{Rgb, SettingType, SettingValue, TimeOfDay, TimeParseError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HomeError {
    #[error("malformed {document} JSON: {message}")]
    Syntax { document: String, message: String },
    #[error("unknown setting type {0}")]
    UnknownSettingType(String),
    #[error("duplicate name {0}")]
    DuplicateName(String),
    #[error("sensor scope {0:?} is not a room in the devices document")]
    SensorRoomUnknown(String),
    #[error("empty {0} name")]
    EmptyName(String),
    #[error("{0:?} is reserved for global sensors")]
    ReservedName(String),
    #[error("device {0} declares no settings")]
    EmptyDevice(String),
    #[error("unexpected template shape: {0}")]
    Shape(String),
    #[error("device name {0:?} has no entry in the type lexicon")]
    UnmappedDeviceName(String),
    #[error("unknown home {0:?}")]
    UnknownHome(String),
    #[error("io error: {0}")]
    Io(String),
}
