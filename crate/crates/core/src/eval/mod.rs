//! Command dataset, matrix runs, metrics and reports.

mod dataset;
mod matrix;
mod metrics;
mod report;

pub use dataset::{
    load_commands, load_commands_from, parse_commands, validate_commands, CategoryTypeMap, CommandRecord,
    GoalCategory, EXPECTED_CATEGORY_COUNTS, EXPECTED_IMMEDIATE, EXPECTED_PERSISTENT,
};
pub use matrix::{
    run_matrix, CritiqueEntry, CritiqueSet, EvalHome, FeedbackSummary, MatrixOptions, RunResult, TargetedDevice,
    UNKNOWN_TAG,
};
pub use metrics::{
    availability, relevance_confusion, tag_columns, targeting_matrix, usage_report, Availability, ConfusionCell,
    RelevanceConfusion, TargetingMatrix, TargetingRow, UsageReport, UsageStats,
};
pub use report::{
    build_report, export_report, proportions, rater_tasks, read_report, EvalReport, HomeTargeting, RaterTask,
    ALL_HOMES, REPORT_SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("dataset corrupt: {0}")]
    DatasetCorrupt(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}
