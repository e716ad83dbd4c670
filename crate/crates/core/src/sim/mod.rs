//! Device state, routine engine and sensor replay.

mod adapter;
mod engine;
mod handle;
mod log;
mod snapshot;

pub use adapter::{AdapterError, DeviceAdapter, DeviceSelector, HttpBridgeAdapter, LoopbackAdapter};
pub use engine::{
    condition_matches, trigger_matches, Installation, InstalledRoutine, Simulator, TickResult, FLOAT_TOLERANCE,
};
pub use handle::{SimHandle, SimView};
pub use log::{replay_events, EventLog, LoggedEvent, PlanSource, SimEvent};
pub use snapshot::{parse_sensor_values, SensorSnapshot, Timeline};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("sensor {sensor} expects {expected}, got {found}")]
    TypeMismatch { sensor: String, expected: String, found: String },
    #[error("snapshot lacks sensor {0}")]
    IncompleteSnapshot(String),
    #[error("unknown sensor {0}")]
    UnknownSensor(String),
    #[error("no device matches {0}")]
    UnknownDevice(String),
    #[error("snapshot timestamp {next} does not follow {previous}")]
    NonMonotonic { previous: i64, next: i64 },
    #[error("expected an immediate plan")]
    NotImmediate,
    #[error("expected a routine plan")]
    NotRoutine,
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("unknown routine {0}")]
    UnknownRoutine(u64),
    #[error("timeline: {0}")]
    Timeline(String),
    #[error("simulator writer has stopped")]
    Closed,
}
