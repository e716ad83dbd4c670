//! Byte-stable CSV and JSON report files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chain::ChainMode;

use super::dataset::{CategoryTypeMap, GoalCategory};
use super::matrix::{EvalHome, RunResult};
use super::metrics::{
    availability, relevance_confusion, targeting_matrix, usage_report, RelevanceConfusion, TargetingMatrix,
    UsageReport, UsageStats,
};
use super::EvalError;
use crate::home::Lexicon;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Label of the targeting matrix pooled over every home.
pub const ALL_HOMES: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeTargeting {
    pub home: String,
    pub matrix: TargetingMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub run_id: String,
    pub mode: Option<ChainMode>,
    pub backend: String,
    pub homes: Vec<String>,
    pub cells: usize,
    /// One matrix per home, then the pooled one.
    pub targeting: Vec<HomeTargeting>,
    pub relevance: RelevanceConfusion,
    pub usage: UsageReport,
}

impl EvalReport {
    pub fn targeting_for(&self, home: &str) -> Option<&TargetingMatrix> {
        self.targeting.iter().find(|t| t.home == home).map(|t| &t.matrix)
    }
}

/// Computes every metric over `results`, whose order is preserved.
pub fn build_report(
    run_id: &str,
    backend: &str,
    homes: &[EvalHome],
    results: &[RunResult],
    lexicon: &Lexicon,
    map: &CategoryTypeMap,
) -> Result<EvalReport, EvalError> {
    let mut targeting: Vec<HomeTargeting> = homes
        .iter()
        .map(|h| HomeTargeting {
            home: h.id.clone(),
            matrix: targeting_matrix(results.iter().filter(|r| r.home == h.id), map),
        })
        .collect();
    targeting.push(HomeTargeting { home: ALL_HOMES.into(), matrix: targeting_matrix(results, map) });
    let available = availability(homes, lexicon, map).map_err(|e| EvalError::Config(e.to_string()))?;
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        run_id: run_id.to_string(),
        mode: results.first().map(|r| r.mode),
        backend: backend.to_string(),
        homes: homes.iter().map(|h| h.id.clone()).collect(),
        cells: results.len(),
        targeting,
        relevance: relevance_confusion(results, &available, map),
        usage: usage_report(results),
    })
}

/// One row per cell with a proposed plan, for external human rating. The
/// rating columns are left blank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterTask {
    pub task_id: String,
    pub home: String,
    pub home_devices: String,
    pub command: String,
    pub goal_type: String,
    pub explanation: String,
    pub plan_json: String,
    pub ambiguity: String,
    pub quality: String,
    pub rationale: String,
}

pub fn rater_tasks(homes: &[EvalHome], results: &[RunResult]) -> Vec<RaterTask> {
    results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let plan = r.trace.plan.as_ref()?;
            let home_devices = homes
                .iter()
                .find(|h| h.id == r.home)
                .map(|h| {
                    h.template
                        .devices()
                        .map(|(room, device, _)| format!("{room}.{device}"))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .unwrap_or_default();
            Some(RaterTask {
                task_id: format!("{}-{:03}", r.run_id, i),
                home: r.home.clone(),
                home_devices,
                command: r.command.clone(),
                goal_type: r.goal_type.as_str().to_string(),
                explanation: plan.get("explanation").and_then(|e| e.as_str()).unwrap_or_default().to_string(),
                plan_json: serde_json::to_string(plan).expect("plan serializes"),
                ambiguity: String::new(),
                quality: String::new(),
                rationale: String::new(),
            })
        })
        .collect()
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> EvalError + '_ {
    move |e| EvalError::Io(format!("{}: {e}", path.display()))
}

fn header_line(kind: &str, run_id: &str) -> String {
    format!("# schema_version={REPORT_SCHEMA_VERSION} report={kind} run_id={run_id}\n")
}

fn csv_text(kind: &str, run_id: &str, header: &[String], rows: Vec<Vec<String>>) -> Result<String, EvalError> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    writer.write_record(header).map_err(|e| EvalError::Io(e.to_string()))?;
    for row in rows {
        writer.write_record(&row).map_err(|e| EvalError::Io(e.to_string()))?;
    }
    let body = writer.into_inner().map_err(|e| EvalError::Io(e.to_string()))?;
    Ok(header_line(kind, run_id) + &String::from_utf8(body).expect("csv output is utf-8"))
}

fn json_text<T: Serialize>(kind: &str, run_id: &str, data: &T) -> String {
    let doc = serde_json::json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "report": kind,
        "run_id": run_id,
        "data": data,
    });
    serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
}

fn strings<const N: usize>(cols: [&str; N]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

pub fn targeting_csv(report: &EvalReport) -> Result<String, EvalError> {
    let columns = report.targeting.first().map(|t| t.matrix.columns.clone()).unwrap_or_else(super::metrics::tag_columns);
    let mut header = strings(["home", "category", "responses"]);
    header.extend(columns.iter().cloned());
    header.extend(strings(["correct", "proportion"]));
    let rows = report
        .targeting
        .iter()
        .flat_map(|t| {
            t.matrix.rows.iter().map(move |row| {
                let mut cells = vec![t.home.clone(), row.category.to_string(), row.responses.to_string()];
                cells.extend(row.counts.iter().map(|c| c.to_string()));
                cells.push(row.correct.to_string());
                cells.push(row.proportion.to_string());
                cells
            })
        })
        .collect();
    csv_text("targeting", &report.run_id, &header, rows)
}

pub fn relevance_csv(report: &EvalReport) -> Result<String, EvalError> {
    let header = strings(["home", "category", "true_positive", "false_positive", "true_negative", "false_negative", "total"]);
    let rows = report
        .relevance
        .cells
        .iter()
        .map(|c| {
            vec![
                c.home.clone(),
                c.category.to_string(),
                c.true_positive.to_string(),
                c.false_positive.to_string(),
                c.true_negative.to_string(),
                c.false_negative.to_string(),
                c.total().to_string(),
            ]
        })
        .collect();
    csv_text("relevance", &report.run_id, &header, rows)
}

pub fn usage_csv(report: &EvalReport) -> Result<String, EvalError> {
    let header = strings([
        "table",
        "group",
        "samples",
        "input_tokens",
        "output_tokens",
        "mean_input_tokens",
        "mean_output_tokens",
        "latency_min",
        "latency_max",
        "latency_mean",
        "cost",
        "approximate",
    ]);
    let row = |table: &str, s: &UsageStats| {
        vec![
            table.to_string(),
            s.group.clone(),
            s.samples.to_string(),
            s.input_tokens.to_string(),
            s.output_tokens.to_string(),
            s.mean_input_tokens.to_string(),
            s.mean_output_tokens.to_string(),
            s.latency_min.to_string(),
            s.latency_max.to_string(),
            s.latency_mean.to_string(),
            s.cost.to_string(),
            s.approximate.to_string(),
        ]
    };
    let u = &report.usage;
    let rows = u
        .by_step
        .iter()
        .map(|s| row("step", s))
        .chain(u.by_home.iter().map(|s| row("home", s)))
        .chain(u.by_goal_type.iter().map(|s| row("goal_type", s)))
        .chain([row("total", &u.total)])
        .collect();
    csv_text("usage", &report.run_id, &header, rows)
}

pub fn results_csv(run_id: &str, results: &[RunResult]) -> Result<String, EvalError> {
    let header = strings([
        "home",
        "command",
        "category",
        "goal_type",
        "mode",
        "temperature",
        "outcome",
        "validity",
        "targeted",
        "tags",
        "model_calls",
        "input_tokens",
        "output_tokens",
        "cost",
        "feedback_outcome",
        "error",
    ]);
    let rows = results
        .iter()
        .map(|r| {
            let usage = r.trace.total_usage();
            vec![
                r.home.clone(),
                r.command.clone(),
                r.category.to_string(),
                r.goal_type.as_str().to_string(),
                r.mode.as_str().to_string(),
                r.params.temperature.to_string(),
                r.outcome.as_str().to_string(),
                r.validity.map(|v| v.as_str().to_string()).unwrap_or_default(),
                r.targeted.iter().map(|d| format!("{}.{}", d.room, d.device)).collect::<Vec<_>>().join(" "),
                r.targeted.iter().map(|d| d.tag.as_str()).collect::<Vec<_>>().join(" "),
                r.trace.model_calls().to_string(),
                usage.input_tokens.to_string(),
                usage.output_tokens.to_string(),
                usage.estimated_cost.to_string(),
                r.feedback.as_ref().map(|f| f.outcome.as_str().to_string()).unwrap_or_default(),
                r.trace.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    csv_text("results", run_id, &header, rows)
}

pub fn rater_tasks_csv(run_id: &str, tasks: &[RaterTask]) -> Result<String, EvalError> {
    let header = strings([
        "task_id",
        "home",
        "home_devices",
        "command",
        "goal_type",
        "explanation",
        "plan_json",
        "ambiguity",
        "quality",
        "rationale",
    ]);
    let rows = tasks
        .iter()
        .map(|t| {
            vec![
                t.task_id.clone(),
                t.home.clone(),
                t.home_devices.clone(),
                t.command.clone(),
                t.goal_type.clone(),
                t.explanation.clone(),
                t.plan_json.clone(),
                t.ambiguity.clone(),
                t.quality.clone(),
                t.rationale.clone(),
            ]
        })
        .collect();
    csv_text("rater_tasks", run_id, &header, rows)
}

/// Writes `report.json`, `results.json` and a CSV + JSON pair per table into
/// `dir`. Returns the paths in write order.
pub fn export_report(
    dir: &Path,
    report: &EvalReport,
    homes: &[EvalHome],
    results: &[RunResult],
) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let run_id = report.run_id.as_str();
    let tasks = rater_tasks(homes, results);
    let targeting: Vec<_> = report.targeting.iter().collect();
    let files: Vec<(&str, String)> = vec![
        ("report.json", serde_json::to_string_pretty(report).expect("report serializes") + "\n"),
        ("results.json", json_text("results", run_id, &results)),
        ("results.csv", results_csv(run_id, results)?),
        ("targeting.json", json_text("targeting", run_id, &targeting)),
        ("targeting.csv", targeting_csv(report)?),
        ("relevance.json", json_text("relevance", run_id, &report.relevance)),
        ("relevance.csv", relevance_csv(report)?),
        ("usage.json", json_text("usage", run_id, &report.usage)),
        ("usage.csv", usage_csv(report)?),
        ("rater_tasks.json", json_text("rater_tasks", run_id, &tasks)),
        ("rater_tasks.csv", rater_tasks_csv(run_id, &tasks)?),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_report(dir: &Path) -> Result<EvalReport, EvalError> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(io(&path))?;
    let report: EvalReport = serde_json::from_str(&text).map_err(|e| EvalError::Io(e.to_string()))?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(EvalError::Io(format!("unsupported report schema {}", report.schema_version)));
    }
    Ok(report)
}

/// `(category, proportion)` for each row.
pub fn proportions(matrix: &TargetingMatrix) -> Vec<(GoalCategory, f64)> {
    matrix.rows.iter().map(|r| (r.category, r.proportion)).collect()
}
