//! Targeting, relevance and usage aggregates over run results.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chain::StepRecord;
use crate::home::{device_catalog, DeviceTag, HomeError, Lexicon};
use crate::llm::UsageRecord;
use crate::plan::GoalType;
use crate::prompt::PromptKind;

use super::dataset::{CategoryTypeMap, GoalCategory};
use super::matrix::{EvalHome, RunResult, UNKNOWN_TAG};

/// Device-type columns in report order, `unknown` last.
pub fn tag_columns() -> Vec<String> {
    DeviceTag::ALL.iter().map(|t| t.as_str().to_string()).chain([UNKNOWN_TAG.to_string()]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetingRow {
    pub category: GoalCategory,
    /// Responses that touched at least one device.
    pub responses: usize,
    /// Aligned with [`TargetingMatrix::columns`]. Each response spreads a
    /// weight of one over the devices it touches, so a row sums to
    /// `responses`.
    pub counts: Vec<f64>,
    /// Sum over responses of the fraction of touched devices that are relevant.
    pub correct: f64,
    /// `correct / responses`; 1.0 when no response targeted anything.
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetingMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<TargetingRow>,
}

impl TargetingMatrix {
    pub fn row(&self, category: GoalCategory) -> &TargetingRow {
        self.rows.iter().find(|r| r.category == category).expect("every category has a row")
    }

    pub fn count(&self, category: GoalCategory, column: &str) -> f64 {
        let i = self.columns.iter().position(|c| c == column).expect("known column");
        self.row(category).counts[i]
    }
}

fn tag_of(name: &str) -> Option<DeviceTag> {
    name.parse().ok()
}

pub fn targeting_matrix<'a>(results: impl IntoIterator<Item = &'a RunResult>, map: &CategoryTypeMap) -> TargetingMatrix {
    let columns = tag_columns();
    let mut rows: Vec<TargetingRow> = GoalCategory::ALL
        .iter()
        .map(|&category| TargetingRow {
            category,
            responses: 0,
            counts: vec![0.0; columns.len()],
            correct: 0.0,
            proportion: 1.0,
        })
        .collect();
    for result in results.into_iter().filter(|r| r.targets_devices()) {
        let row = rows.iter_mut().find(|r| r.category == result.category).expect("row per category");
        // Integer tallies per response, divided once, so an all-relevant response adds exactly 1.
        let touched = result.targeted.len() as f64;
        let mut per_column = vec![0usize; columns.len()];
        let mut relevant = 0usize;
        row.responses += 1;
        for device in &result.targeted {
            let column = columns.iter().position(|c| *c == device.tag).unwrap_or(columns.len() - 1);
            per_column[column] += 1;
            if map.is_relevant(result.category, tag_of(&device.tag)) {
                relevant += 1;
            }
        }
        for (count, n) in row.counts.iter_mut().zip(per_column) {
            if n > 0 {
                *count += n as f64 / touched;
            }
        }
        row.correct += relevant as f64 / touched;
    }
    for row in &mut rows {
        if row.responses > 0 {
            row.proportion = row.correct / row.responses as f64;
        }
    }
    TargetingMatrix { columns, rows }
}

/// Whether each home has any device relevant to each category.
pub type Availability = BTreeMap<(String, GoalCategory), bool>;

pub fn availability(homes: &[EvalHome], lexicon: &Lexicon, map: &CategoryTypeMap) -> Result<Availability, HomeError> {
    let mut out = Availability::new();
    for home in homes {
        let tags: Vec<Option<DeviceTag>> = match device_catalog(&home.template, lexicon) {
            Ok(catalog) => catalog.into_iter().map(|e| Some(e.tag)).collect(),
            Err(HomeError::UnmappedDeviceName(_)) => {
                home.template.devices().map(|(_, device, _)| lexicon.tag_for(device)).collect()
            }
            Err(e) => return Err(e),
        };
        for category in GoalCategory::ALL {
            let available = tags.iter().any(|&t| map.is_relevant(category, t));
            out.insert((home.id.clone(), category), available);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCell {
    pub home: String,
    pub category: GoalCategory,
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl ConfusionCell {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceConfusion {
    /// Ordered by home (first appearance) then category.
    pub cells: Vec<ConfusionCell>,
}

impl RelevanceConfusion {
    pub fn cell(&self, home: &str, category: GoalCategory) -> Option<&ConfusionCell> {
        self.cells.iter().find(|c| c.home == home && c.category == category)
    }
}

/// A plan counts as proposed when it touches a device; anything else,
/// errors included, counts as declined. A plan that uses no relevant device
/// is a false positive even where relevant devices exist. Cells missing from
/// `availability` are treated as having no relevant device.
pub fn relevance_confusion<'a>(
    results: impl IntoIterator<Item = &'a RunResult>,
    availability: &Availability,
    map: &CategoryTypeMap,
) -> RelevanceConfusion {
    let mut cells: Vec<ConfusionCell> = Vec::new();
    for result in results {
        let index = match cells.iter().position(|c| c.home == result.home && c.category == result.category) {
            Some(i) => i,
            None => {
                cells.push(ConfusionCell {
                    home: result.home.clone(),
                    category: result.category,
                    true_positive: 0,
                    false_positive: 0,
                    true_negative: 0,
                    false_negative: 0,
                });
                cells.len() - 1
            }
        };
        let available = availability.get(&(result.home.clone(), result.category)).copied().unwrap_or_else(|| {
            tracing::warn!(home = %result.home, category = %result.category, "no availability entry");
            false
        });
        let uses_relevant = result.targeted.iter().any(|d| map.is_relevant(result.category, tag_of(&d.tag)));
        let cell = &mut cells[index];
        match (result.targets_devices(), available) {
            (true, true) if uses_relevant => cell.true_positive += 1,
            (true, _) => cell.false_positive += 1,
            (false, false) => cell.true_negative += 1,
            (false, true) => cell.false_negative += 1,
        }
    }
    let home_order: Vec<String> = cells.iter().fold(Vec::new(), |mut acc, c| {
        if !acc.contains(&c.home) {
            acc.push(c.home.clone());
        }
        acc
    });
    cells.sort_by_key(|c| (home_order.iter().position(|h| *h == c.home), c.category));
    RelevanceConfusion { cells }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageStats {
    pub group: String,
    pub samples: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub mean_input_tokens: f64,
    pub mean_output_tokens: f64,
    pub latency_min: f64,
    pub latency_max: f64,
    pub latency_mean: f64,
    pub cost: f64,
    /// Some counts come from the whitespace fallback tokenizer.
    pub approximate: bool,
}

impl UsageStats {
    fn of(group: impl Into<String>, samples: &[UsageRecord]) -> Self {
        let n = samples.len();
        let input_tokens = samples.iter().map(|s| s.input_tokens).sum::<u64>();
        let output_tokens = samples.iter().map(|s| s.output_tokens).sum::<u64>();
        let mean = |v: f64| if n == 0 { 0.0 } else { v / n as f64 };
        let latencies = samples.iter().map(|s| s.latency);
        UsageStats {
            group: group.into(),
            samples: n,
            input_tokens,
            output_tokens,
            mean_input_tokens: mean(input_tokens as f64),
            mean_output_tokens: mean(output_tokens as f64),
            latency_min: latencies.clone().reduce(f64::min).unwrap_or(0.0),
            latency_max: latencies.clone().reduce(f64::max).unwrap_or(0.0),
            latency_mean: mean(latencies.sum()),
            cost: samples.iter().map(|s| s.estimated_cost).sum(),
            approximate: samples.iter().any(|s| s.approximate),
        }
    }
}

/// Per-step rows use one sample per model call; home, goal-type and total
/// rows use one sample per cell, summed over its calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageReport {
    pub by_step: Vec<UsageStats>,
    pub by_home: Vec<UsageStats>,
    pub by_goal_type: Vec<UsageStats>,
    pub total: UsageStats,
}

fn all_steps(result: &RunResult) -> impl Iterator<Item = &StepRecord> {
    result.trace.steps.iter().chain(result.feedback.iter().flat_map(|f| f.steps.iter()))
}

fn cell_usage(result: &RunResult) -> UsageRecord {
    let mut total = UsageRecord::default();
    for step in all_steps(result) {
        total.add(&step.usage);
    }
    total
}

pub fn usage_report(results: &[RunResult]) -> UsageReport {
    let mut by_step: BTreeMap<PromptKind, Vec<UsageRecord>> = BTreeMap::new();
    for step in results.iter().flat_map(all_steps) {
        by_step.entry(step.step).or_default().push(step.usage);
    }
    let mut homes: Vec<(String, Vec<UsageRecord>)> = Vec::new();
    let mut goals: BTreeMap<GoalType, Vec<UsageRecord>> = BTreeMap::new();
    for result in results {
        let usage = cell_usage(result);
        match homes.iter_mut().find(|(h, _)| *h == result.home) {
            Some((_, samples)) => samples.push(usage),
            None => homes.push((result.home.clone(), vec![usage])),
        }
        goals.entry(result.goal_type).or_default().push(usage);
    }
    let cells: Vec<UsageRecord> = results.iter().map(cell_usage).collect();
    UsageReport {
        by_step: PromptKind::ALL
            .iter()
            .filter_map(|k| by_step.get(k).map(|s| UsageStats::of(k.as_str(), s)))
            .collect(),
        by_home: homes.iter().map(|(h, s)| UsageStats::of(h.as_str(), s)).collect(),
        by_goal_type: goals.iter().map(|(g, s)| UsageStats::of(g.as_str(), s)).collect(),
        total: UsageStats::of("total", &cells),
    }
}
