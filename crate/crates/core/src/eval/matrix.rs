//! Homes × commands runs against one chain configuration.

use std::path::Path;
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio_util::sync::CancellationToken;

use crate::chain::{plan_diff, Chain, ChainMode, ChainOutcome, ChainTrace, Proposal, StepRecord, Verdict};
use crate::home::{HomeTemplate, Lexicon};
use crate::llm::{normalize_command, GenerationParams};
use crate::plan::{GoalType, PlanDiff, ValidityClass};

use super::dataset::{CommandRecord, GoalCategory};
use super::EvalError;

/// Tag column for device names the lexicon cannot place.
pub const UNKNOWN_TAG: &str = "unknown";

#[derive(Debug, Clone)]
pub struct EvalHome {
    pub id: String,
    pub template: Arc<HomeTemplate>,
}

impl EvalHome {
    pub fn new(id: impl Into<String>, template: HomeTemplate) -> Self {
        EvalHome { id: id.into(), template: Arc::new(template) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetedDevice {
    pub room: String,
    pub device: String,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSummary {
    pub verdict: Verdict,
    pub outcome: ChainOutcome,
    pub utterance: String,
    pub revised_plan: Option<Value>,
    pub steps: Vec<StepRecord>,
}

/// One matrix cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub home: String,
    pub command: String,
    pub category: GoalCategory,
    pub goal_type: GoalType,
    pub mode: ChainMode,
    pub params: GenerationParams,
    pub outcome: ChainOutcome,
    pub validity: Option<ValidityClass>,
    pub diff: Option<PlanDiff>,
    /// Devices the proposed plan touches, in plan order.
    pub targeted: Vec<TargetedDevice>,
    pub feedback: Option<FeedbackSummary>,
    pub trace: ChainTrace,
}

impl RunResult {
    pub fn targets_devices(&self) -> bool {
        !self.targeted.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueEntry {
    pub home: String,
    pub command: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CritiqueSet {
    pub version: u32,
    pub critiques: Vec<CritiqueEntry>,
}

impl CritiqueSet {
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Config(format!("critique fixture: {e}")))
    }

    /// A file, or every `*.json` in a directory in name order.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| EvalError::Io(format!("{}: {e}", p.display())));
        if !path.is_dir() {
            return Self::from_json(&read(path)?);
        }
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| EvalError::Io(e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        let mut set = CritiqueSet { version: 1, critiques: Vec::new() };
        for file in files {
            set.critiques.extend(Self::from_json(&read(&file)?)?.critiques);
        }
        Ok(set)
    }

    pub fn lookup(&self, home: &str, command: &str) -> Option<&Verdict> {
        let command = normalize_command(command);
        self.critiques.iter().find(|c| c.home == home && normalize_command(&c.command) == command).map(|c| &c.verdict)
    }
}

#[derive(Debug, Clone)]
pub struct MatrixOptions {
    pub run_id: String,
    pub critiques: Option<CritiqueSet>,
    pub lexicon: Lexicon,
    /// Cells in flight at once; the gateway applies its own limit too.
    pub concurrency: usize,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        MatrixOptions { run_id: "run".into(), critiques: None, lexicon: Lexicon::builtin(), concurrency: 8 }
    }
}

/// One result per (home, command), home-major, in input order.
///
/// Cell failures are recorded in the result and never stop the matrix.
pub async fn run_matrix(
    chain: &Chain,
    homes: &[EvalHome],
    commands: &[CommandRecord],
    options: &MatrixOptions,
) -> Vec<RunResult> {
    let cells = homes.iter().flat_map(|home| commands.iter().map(move |record| (home, record)));
    stream::iter(cells)
        .map(|(home, record)| run_cell(chain, home, record, options))
        .buffered(options.concurrency.max(1))
        .collect()
        .await
}

async fn run_cell(chain: &Chain, home: &EvalHome, record: &CommandRecord, options: &MatrixOptions) -> RunResult {
    let cancel = CancellationToken::new();
    let template = home.template.as_ref();
    let trace = chain.run(template, &record.command, Some(record.goal_type), &[], &cancel).await;
    let diff = plan_diff(template, &trace);
    let targeted = trace
        .parsed_plan
        .as_ref()
        .map(|plan| {
            plan.touched_devices()
                .into_iter()
                .map(|(room, device)| TargetedDevice {
                    room: room.to_string(),
                    device: device.to_string(),
                    tag: options
                        .lexicon
                        .tag_for(device)
                        .map(|t| t.as_str().to_string())
                        .unwrap_or_else(|| UNKNOWN_TAG.to_string()),
                })
                .collect()
        })
        .unwrap_or_default();
    let mut feedback = None;
    if let (Some(critiques), Some(proposal)) = (&options.critiques, Proposal::from_trace(&trace)) {
        if let Some(verdict) = critiques.lookup(&home.id, &record.command) {
            feedback = Some(match chain.feedback(template, &proposal, verdict, &cancel).await {
                Ok(result) => FeedbackSummary {
                    verdict: verdict.clone(),
                    outcome: result.outcome,
                    utterance: result.utterance,
                    revised_plan: result.revised.map(|p| p.to_json()),
                    steps: result.steps,
                },
                Err(e) => FeedbackSummary {
                    verdict: verdict.clone(),
                    outcome: ChainOutcome::Error,
                    utterance: e.to_string(),
                    revised_plan: None,
                    steps: Vec::new(),
                },
            });
        }
    }
    RunResult {
        run_id: options.run_id.clone(),
        home: home.id.clone(),
        command: record.command.clone(),
        category: record.category,
        goal_type: record.goal_type,
        mode: chain.config().mode,
        params: chain.config().params.clone(),
        outcome: trace.outcome,
        validity: trace.validity,
        diff,
        targeted,
        feedback,
        trace,
    }
}
