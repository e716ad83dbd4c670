//! Response parsing: JSON extraction, structural validity and typed plans.

mod diff;
mod extract;
mod model;
mod validity;

pub use diff::{diff_plan, PlanDiff, PlannedChange, TriggerCondition};
pub use extract::{extract_json, repair_json};
pub use model::{parse_plan, ActionPlan, GoalType, SensorPath, Trigger};
pub use validity::{assess_json, assess_validity, classify_validity, ValidityClass, ValidityReport};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("response is not a JSON object")]
    NotAnObject,
    #[error("routine is missing {0}")]
    MissingField(&'static str),
    #[error("{path}: expected {expected}, found {found}")]
    ValueTypeMismatch { path: String, expected: String, found: String },
    #[error("unknown sensor {0}")]
    UnknownSensorPath(String),
    #[error("unknown device or setting {0}")]
    UnknownDevice(String),
    #[error("plan assigns nothing")]
    EmptyPlan,
    #[error("unexpected plan shape: {0}")]
    Shape(String),
}
