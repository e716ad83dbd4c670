//! The reasoning chain: clarify, filter, plan and feedback, with ablation modes.

mod parse;
mod session;
mod store;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio_util::sync::CancellationToken;

use crate::home::{digest_hex, HomeTemplate};
use crate::llm::{Gateway, GenerationParams, LlmError, UsageRecord};
use crate::plan::{diff_plan, extract_json, ActionPlan, GoalType, SensorPath, ValidityClass};
use crate::prompt::{PromptContext, PromptError, PromptKind, PromptSet, PromptStyle};

pub use parse::{
    outside_subset, parse_device_subset, parse_goal_line, parse_plan_response, parse_sensor_subset, parse_verdict,
    DeviceRef, Rejection,
};
pub use session::{Episode, MessageResult, PendingPlan, SessionError, SessionState, Turn};
pub use store::{BadPlanLog, BadPlanRecord, CacheEntry, PlanCache, CACHE_SCHEMA_VERSION};

pub const CANNOT_IMPROVE: &str = "CANNOT_IMPROVE";

const NOTHING_RELEVANT: &str =
    "I couldn't find a device in this home that fits that request. Could you tell me more about what you need?";
const APOLOGY: &str = "Sorry, I couldn't find a way to improve that plan, so I won't change anything.";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainMode {
    /// One baseline prompt, no relevance check.
    BaselineSinglePrompt,
    /// Relevance and device selection in one prompt.
    CombinedClarifyFilter,
    /// Separate relevance check, then selection and planning in one prompt.
    CombinedFilterPlan,
    #[default]
    FullSplit,
}

impl ChainMode {
    pub const ALL: [ChainMode; 4] = [
        ChainMode::BaselineSinglePrompt,
        ChainMode::CombinedClarifyFilter,
        ChainMode::CombinedFilterPlan,
        ChainMode::FullSplit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChainMode::BaselineSinglePrompt => "baseline_single_prompt",
            ChainMode::CombinedClarifyFilter => "combined_clarify_filter",
            ChainMode::CombinedFilterPlan => "combined_filter_plan",
            ChainMode::FullSplit => "full_split",
        }
    }
}

impl fmt::Display for ChainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChainMode {
    type Err = ChainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChainMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ChainError::Config(format!("unknown chain mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub mode: ChainMode,
    pub params: GenerationParams,
    /// Style of the baseline prompt.
    pub baseline_style: PromptStyle,
    /// Pass every sensor to planning instead of filtering them.
    pub skip_sensor_filter: bool,
    /// Revision prompts see the whole home rather than the selected subset.
    pub feedback_full_template: bool,
    pub max_clarify_rounds: usize,
    /// Extra attempts per step after invalid output, with the error echoed.
    pub step_retries: u32,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            mode: ChainMode::FullSplit,
            params: GenerationParams::default(),
            baseline_style: PromptStyle::ZeroShotInstruction,
            skip_sensor_filter: false,
            feedback_full_template: true,
            max_clarify_rounds: 3,
            step_retries: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainOutcome {
    PlanProposed,
    NoRelevantDevices,
    Abandoned,
    Error,
}

impl ChainOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            ChainOutcome::PlanProposed => "plan_proposed",
            ChainOutcome::NoRelevantDevices => "no_relevant_devices",
            ChainOutcome::Abandoned => "abandoned",
            ChainOutcome::Error => "error",
        }
    }
}

/// What a step's response was understood to say.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StepResult {
    Goal { goal: GoalType },
    Relevance { relevant: bool, parsed: bool },
    DeviceSubset { devices: Vec<DeviceRef> },
    SensorSubset { sensors: Vec<SensorPath> },
    Plan { plan: Option<Value>, validity: ValidityClass },
    CannotImprove,
    Rejected { message: String, validity: Option<ValidityClass> },
    Failed { message: String },
}

impl StepResult {
    pub fn validity(&self) -> Option<ValidityClass> {
        match self {
            StepResult::Plan { validity, .. } => Some(*validity),
            StepResult::Rejected { validity, .. } => *validity,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Running,
    Done,
    Rejected,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEvent {
    pub step: PromptKind,
    pub attempt: u32,
    pub status: StepStatus,
}

/// Called synchronously from inside a run; must not block.
pub type StepObserver = dyn Fn(StepEvent) + Send + Sync;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: PromptKind,
    pub attempt: u32,
    pub prompt_digest: String,
    pub completion_digest: Option<String>,
    pub usage: UsageRecord,
    pub result: StepResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub command: String,
    pub clarifications: Vec<String>,
    pub home: Option<String>,
    pub template_digest: String,
    pub mode: ChainMode,
    pub goal: Option<GoalType>,
    pub steps: Vec<StepRecord>,
    pub outcome: ChainOutcome,
    pub utterance: String,
    pub cache_hit: bool,
    pub device_subset: Option<Vec<DeviceRef>>,
    pub sensor_subset: Option<Vec<SensorPath>>,
    /// Canonical JSON of the proposed plan.
    pub plan: Option<Value>,
    /// Class of the first plan-producing response.
    pub validity: Option<ValidityClass>,
    pub error: Option<String>,
    #[serde(skip)]
    pub parsed_plan: Option<ActionPlan>,
}

impl ChainTrace {
    fn new(template: &HomeTemplate, command: &str, clarifications: &[String], mode: ChainMode) -> Self {
        ChainTrace {
            command: command.trim().to_string(),
            clarifications: clarifications.to_vec(),
            home: template.label().map(str::to_string),
            template_digest: template.digest(),
            mode,
            goal: None,
            steps: Vec::new(),
            outcome: ChainOutcome::Error,
            utterance: String::new(),
            cache_hit: false,
            device_subset: None,
            sensor_subset: None,
            plan: None,
            validity: None,
            error: None,
            parsed_plan: None,
        }
    }

    pub fn total_usage(&self) -> UsageRecord {
        let mut total = UsageRecord::default();
        for step in &self.steps {
            total.add(&step.usage);
        }
        total
    }

    /// Model calls made, one per step record.
    pub fn model_calls(&self) -> usize {
        self.steps.len()
    }

    fn finish(mut self, outcome: ChainOutcome, utterance: impl Into<String>) -> Self {
        self.outcome = outcome;
        self.utterance = utterance.into();
        self.validity = self.steps.iter().find_map(|s| s.result.validity());
        self
    }

    fn fail(mut self, error: ChainError) -> Self {
        let message = error.to_string();
        self.error = Some(message.clone());
        self.finish(ChainOutcome::Error, format!("Something went wrong: {message}"))
    }

    fn propose(mut self, plan: ActionPlan) -> Self {
        let utterance = describe_plan(&plan);
        self.plan = Some(plan.to_json());
        self.parsed_plan = Some(plan);
        self.finish(ChainOutcome::PlanProposed, utterance)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChainError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{step} gave no usable response: {message}")]
    InvalidOutput { step: PromptKind, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

/// A user's review of a proposed plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    #[serde(alias = "reject")]
    Critique { critique: String },
}

/// A proposed plan with the inputs that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub command: String,
    pub clarifications: Vec<String>,
    pub goal: GoalType,
    pub plan: ActionPlan,
    pub device_subset: Option<Vec<DeviceRef>>,
    pub sensor_subset: Option<Vec<SensorPath>>,
}

impl Proposal {
    pub fn from_trace(trace: &ChainTrace) -> Option<Proposal> {
        Some(Proposal {
            command: trace.command.clone(),
            clarifications: trace.clarifications.clone(),
            goal: trace.goal?,
            plan: trace.parsed_plan.clone()?,
            device_subset: trace.device_subset.clone(),
            sensor_subset: trace.sensor_subset.clone(),
        })
    }

    fn cache_command(&self) -> String {
        cache_command(&self.command, &self.clarifications)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackResult {
    /// Set on accept.
    pub accepted: Option<ActionPlan>,
    /// Set when a critique produced a new plan to review.
    pub revised: Option<ActionPlan>,
    pub outcome: ChainOutcome,
    pub utterance: String,
    pub steps: Vec<StepRecord>,
}

fn cache_command(command: &str, clarifications: &[String]) -> String {
    std::iter::once(command).chain(clarifications.iter().map(String::as_str)).collect::<Vec<_>>().join(" | ")
}

/// Plain-language summary used when a plan has no explanation.
pub fn describe_plan(plan: &ActionPlan) -> String {
    if !plan.explanation().trim().is_empty() {
        return plan.explanation().trim().to_string();
    }
    let changes: Vec<String> = plan.assignments().iter().map(|(p, v)| format!("{p} to {v}")).collect();
    match plan.trigger() {
        None => format!("I will set {}.", changes.join(", ")),
        Some(trigger) => {
            let when: Vec<String> = trigger.conditions.iter().map(|(p, v)| format!("{p} is {v}")).collect();
            format!("When {}, I will set {}.", when.join(" and "), changes.join(", "))
        }
    }
}

pub struct Chain {
    gateway: Arc<Gateway>,
    prompts: PromptSet,
    config: ChainConfig,
    cache: Arc<PlanCache>,
    bad_plans: Arc<BadPlanLog>,
}

impl Chain {
    pub fn new(gateway: Arc<Gateway>, config: ChainConfig) -> Self {
        Chain {
            gateway,
            prompts: PromptSet::builtin().clone(),
            config,
            cache: Arc::new(PlanCache::in_memory()),
            bad_plans: Arc::new(BadPlanLog::in_memory()),
        }
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_stores(mut self, cache: Arc<PlanCache>, bad_plans: Arc<BadPlanLog>) -> Self {
        self.cache = cache;
        self.bad_plans = bad_plans;
        self
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn cache(&self) -> &PlanCache {
        &self.cache
    }

    pub fn bad_plans(&self) -> &BadPlanLog {
        &self.bad_plans
    }

    /// Run the configured pipeline for one command.
    ///
    /// With `goal` absent the goal type is inferred with one extra call.
    pub async fn run(
        &self,
        template: &HomeTemplate,
        command: &str,
        goal: Option<GoalType>,
        clarifications: &[String],
        cancel: &CancellationToken,
    ) -> ChainTrace {
        self.run_observed(template, command, goal, clarifications, cancel, None).await
    }

    /// [`Chain::run`], reporting each model call as it starts and ends.
    pub async fn run_observed(
        &self,
        template: &HomeTemplate,
        command: &str,
        goal: Option<GoalType>,
        clarifications: &[String],
        cancel: &CancellationToken,
        observer: Option<&StepObserver>,
    ) -> ChainTrace {
        let mut trace = ChainTrace::new(template, command, clarifications, self.config.mode);
        let mut run = Run { chain: self, template, clarifications, cancel, trace: &mut trace, observer };
        let result = run.execute(goal).await;
        match result {
            Ok(Decision::Plan(plan)) => trace.propose(plan),
            Ok(Decision::Decline(utterance)) => trace.finish(ChainOutcome::NoRelevantDevices, utterance),
            Err(e) => trace.fail(e),
        }
    }

    /// Infer whether a command is immediate or persistent.
    pub async fn classify_goal(
        &self,
        template: &HomeTemplate,
        command: &str,
        clarifications: &[String],
        cancel: &CancellationToken,
    ) -> Result<(GoalType, StepRecord), ChainError> {
        let mut trace = ChainTrace::new(template, command, clarifications, self.config.mode);
        let mut run = Run { chain: self, template, clarifications, cancel, trace: &mut trace, observer: None };
        let goal = run.classify_goal(command).await?;
        Ok((goal, trace.steps.pop().expect("classification records a step")))
    }

    /// Review a proposed plan: cache it on accept, or log it and revise once on critique.
    pub async fn feedback(
        &self,
        template: &HomeTemplate,
        proposal: &Proposal,
        verdict: &Verdict,
        cancel: &CancellationToken,
    ) -> Result<FeedbackResult, ChainError> {
        self.feedback_observed(template, proposal, verdict, cancel, None).await
    }

    pub async fn feedback_observed(
        &self,
        template: &HomeTemplate,
        proposal: &Proposal,
        verdict: &Verdict,
        cancel: &CancellationToken,
        observer: Option<&StepObserver>,
    ) -> Result<FeedbackResult, ChainError> {
        let critique = match verdict {
            Verdict::Accept => {
                self.cache.store(template, &proposal.cache_command(), &proposal.plan)?;
                return Ok(FeedbackResult {
                    accepted: Some(proposal.plan.clone()),
                    revised: None,
                    outcome: ChainOutcome::PlanProposed,
                    utterance: "Done.".into(),
                    steps: Vec::new(),
                });
            }
            Verdict::Critique { critique } => critique,
        };
        self.bad_plans.append(BadPlanRecord {
            command: proposal.command.clone(),
            home_digest: template.digest(),
            plan: proposal.plan.to_json(),
            critique: critique.clone(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        })?;

        let subset = self.feedback_view(template, proposal);
        let view = subset.as_ref().unwrap_or(template);
        let context = PromptContext {
            clarifications: proposal.clarifications.clone(),
            prior_plan: Some(proposal.plan.to_json_string()),
            critique: Some(critique.clone()),
            retry_error: None,
            persistent: proposal.goal == GoalType::Persistent,
        };
        let mut trace = ChainTrace::new(template, &proposal.command, &proposal.clarifications, self.config.mode);
        let mut run = Run { chain: self, template, clarifications: &proposal.clarifications, cancel, trace: &mut trace, observer };
        let revised = run
            .step(PromptKind::FeedbackRevise, view, &proposal.command, &context, 0, |raw| {
                if raw.contains(CANNOT_IMPROVE) && extract_json(raw).is_none() {
                    return Ok((None, StepResult::CannotImprove));
                }
                let (plan, validity) = parse_plan_response(template, subset.as_ref(), proposal.goal, raw)?;
                Ok((plan.clone(), StepResult::Plan { plan: plan.map(|p| p.to_json()), validity }))
            })
            .await;
        let steps = std::mem::take(&mut trace.steps);
        let abandon = |steps| FeedbackResult {
            accepted: None,
            revised: None,
            outcome: ChainOutcome::Abandoned,
            utterance: APOLOGY.into(),
            steps,
        };
        match revised {
            Ok(Some(plan)) if plan != proposal.plan => Ok(FeedbackResult {
                accepted: None,
                utterance: describe_plan(&plan),
                revised: Some(plan),
                outcome: ChainOutcome::PlanProposed,
                steps,
            }),
            Ok(_) | Err(ChainError::InvalidOutput { .. }) => Ok(abandon(steps)),
            Err(e) => Err(e),
        }
    }

    fn feedback_view(&self, template: &HomeTemplate, proposal: &Proposal) -> Option<HomeTemplate> {
        if self.config.feedback_full_template {
            return None;
        }
        let devices = proposal.device_subset.as_ref()?;
        let mut view = template.device_subset(devices.iter().map(|d| (d.room.as_str(), d.device.as_str())));
        if let Some(sensors) = &proposal.sensor_subset {
            view = view.sensor_subset(sensors.iter().map(|s| (s.scope.as_str(), s.name.as_str())));
        }
        Some(view)
    }
}

enum Decision {
    Plan(ActionPlan),
    Decline(String),
}

struct Run<'a> {
    chain: &'a Chain,
    template: &'a HomeTemplate,
    clarifications: &'a [String],
    cancel: &'a CancellationToken,
    trace: &'a mut ChainTrace,
    observer: Option<&'a StepObserver>,
}

impl Run<'_> {
    fn started(&self, step: PromptKind, attempt: u32) {
        if let Some(observe) = self.observer {
            observe(StepEvent { step, attempt, status: StepStatus::Running });
        }
    }

    fn record(&mut self, record: StepRecord) {
        if let Some(observe) = self.observer {
            let status = match record.result {
                StepResult::Rejected { .. } => StepStatus::Rejected,
                StepResult::Failed { .. } => StepStatus::Failed,
                _ => StepStatus::Done,
            };
            observe(StepEvent { step: record.step, attempt: record.attempt, status });
        }
        self.trace.steps.push(record);
    }

    async fn execute(&mut self, goal: Option<GoalType>) -> Result<Decision, ChainError> {
        let command = self.trace.command.clone();
        let goal = match goal {
            Some(goal) => goal,
            None => self.classify_goal(&command).await?,
        };
        self.trace.goal = Some(goal);

        let cache_key = cache_command(&command, self.clarifications);
        if let Some(plan) = self.chain.cache.lookup(self.template, &cache_key, goal) {
            self.trace.cache_hit = true;
            return Ok(Decision::Plan(plan));
        }

        match self.chain.config.mode {
            ChainMode::BaselineSinglePrompt => self.baseline(&command, goal).await,
            ChainMode::FullSplit => {
                if let Some(utterance) = self.clarify(&command).await? {
                    return Ok(Decision::Decline(utterance));
                }
                let devices = self.filter_devices(&command).await?;
                self.plan_over_subset(&command, goal, devices).await
            }
            ChainMode::CombinedClarifyFilter => match self.clarify_filter(&command).await? {
                Err(utterance) => Ok(Decision::Decline(utterance)),
                Ok(devices) => self.plan_over_subset(&command, goal, devices).await,
            },
            ChainMode::CombinedFilterPlan => {
                if let Some(utterance) = self.clarify(&command).await? {
                    return Ok(Decision::Decline(utterance));
                }
                let kind = match goal {
                    GoalType::Immediate => PromptKind::FilterPlanImmediate,
                    GoalType::Persistent => PromptKind::FilterPlanPersistent,
                };
                self.plan_step(kind, self.template, None, &command, goal).await
            }
        }
    }

    fn context(&self) -> PromptContext {
        PromptContext::with_clarifications(self.clarifications)
    }

    /// Render, call and parse one step, retrying invalid output with the error echoed.
    async fn step<T>(
        &mut self,
        kind: PromptKind,
        view: &HomeTemplate,
        command: &str,
        base: &PromptContext,
        retries: u32,
        parse: impl Fn(&str) -> Result<(T, StepResult), Rejection>,
    ) -> Result<T, ChainError> {
        let mut context = base.clone();
        for attempt in 0..=retries {
            let prompt = self.chain.prompts.render_chain_step(kind, view, command, &context)?;
            self.started(kind, attempt);
            let completion = self
                .chain
                .gateway
                .complete_cancellable(&prompt, &self.chain.config.params, self.cancel)
                .await;
            let completion = match completion {
                Ok(c) => c,
                Err(e) => {
                    self.record(StepRecord {
                        step: kind,
                        attempt,
                        prompt_digest: prompt.digest(),
                        completion_digest: None,
                        usage: UsageRecord::default(),
                        result: StepResult::Failed { message: e.to_string() },
                    });
                    return Err(e.into());
                }
            };
            let mut record = StepRecord {
                step: kind,
                attempt,
                prompt_digest: prompt.digest(),
                completion_digest: Some(digest_hex(completion.text.as_bytes())),
                usage: completion.usage,
                result: StepResult::CannotImprove,
            };
            match parse(&completion.text) {
                Ok((value, result)) => {
                    record.result = result;
                    self.record(record);
                    return Ok(value);
                }
                Err(rejection) => {
                    record.result =
                        StepResult::Rejected { message: rejection.message.clone(), validity: rejection.validity };
                    self.record(record);
                    if attempt == retries {
                        return Err(ChainError::InvalidOutput { step: kind, message: rejection.message });
                    }
                    context.retry_error = Some(rejection.message);
                }
            }
        }
        unreachable!("loop returns on the last attempt")
    }

    async fn classify_goal(&mut self, command: &str) -> Result<GoalType, ChainError> {
        let context = self.context();
        self.step(PromptKind::ClassifyGoal, self.template, command, &context, 0, |raw| {
            let goal = parse_goal_line(raw).unwrap_or_else(|| {
                tracing::warn!("goal line missing; assuming immediate");
                GoalType::Immediate
            });
            Ok((goal, StepResult::Goal { goal }))
        })
        .await
    }

    /// `Some(utterance)` when nothing relevant was found.
    async fn clarify(&mut self, command: &str) -> Result<Option<String>, ChainError> {
        let context = self.context();
        self.step(PromptKind::Clarify, self.template, command, &context, 0, |raw| {
            let (relevant, parsed, utterance) = match parse_verdict(raw) {
                Some((relevant, utterance)) => (relevant, true, utterance),
                None => {
                    tracing::warn!("relevance verdict missing; treating as not relevant");
                    (false, false, String::new())
                }
            };
            let decline = (!relevant).then(|| if utterance.is_empty() { NOTHING_RELEVANT.into() } else { utterance });
            Ok((decline, StepResult::Relevance { relevant, parsed }))
        })
        .await
    }

    async fn filter_devices(&mut self, command: &str) -> Result<Vec<DeviceRef>, ChainError> {
        let context = self.context();
        let template = self.template;
        let retries = self.chain.config.step_retries;
        let devices = self
            .step(PromptKind::FilterDevices, template, command, &context, retries, |raw| {
                let json = extract_json(raw).ok_or_else(|| Rejection::new("the response contains no valid JSON object"))?;
                let devices = parse_device_subset(template, &json).map_err(Rejection::new)?;
                Ok((devices.clone(), StepResult::DeviceSubset { devices }))
            })
            .await?;
        self.trace.device_subset = Some(devices.clone());
        Ok(devices)
    }

    /// `Err(utterance)` when nothing relevant was found.
    async fn clarify_filter(&mut self, command: &str) -> Result<Result<Vec<DeviceRef>, String>, ChainError> {
        let context = self.context();
        let template = self.template;
        let retries = self.chain.config.step_retries;
        let selection = self
            .step(PromptKind::ClarifyFilter, template, command, &context, retries, |raw| {
                let rest = match parse_verdict(raw) {
                    Some((true, rest)) => rest,
                    Some((false, utterance)) => {
                        let utterance = if utterance.is_empty() { NOTHING_RELEVANT.into() } else { utterance };
                        return Ok((Err(utterance), StepResult::Relevance { relevant: false, parsed: true }));
                    }
                    None => {
                        tracing::warn!("relevance verdict missing; treating as not relevant");
                        return Ok((Err(NOTHING_RELEVANT.into()), StepResult::Relevance { relevant: false, parsed: false }));
                    }
                };
                let json = extract_json(&rest).ok_or_else(|| Rejection::new("no device selection JSON after the verdict"))?;
                let devices = parse_device_subset(template, &json).map_err(Rejection::new)?;
                Ok((Ok(devices.clone()), StepResult::DeviceSubset { devices }))
            })
            .await?;
        if let Ok(devices) = &selection {
            self.trace.device_subset = Some(devices.clone());
        }
        Ok(selection)
    }

    async fn filter_sensors(&mut self, command: &str) -> Result<Vec<SensorPath>, ChainError> {
        let context = self.context();
        let template = self.template;
        let retries = self.chain.config.step_retries;
        let sensors = self
            .step(PromptKind::FilterSensors, template, command, &context, retries, |raw| {
                let json = extract_json(raw).ok_or_else(|| Rejection::new("the response contains no valid JSON object"))?;
                let sensors = parse_sensor_subset(template, &json).map_err(Rejection::new)?;
                Ok((sensors.clone(), StepResult::SensorSubset { sensors }))
            })
            .await?;
        self.trace.sensor_subset = Some(sensors.clone());
        Ok(sensors)
    }

    async fn plan_over_subset(
        &mut self,
        command: &str,
        goal: GoalType,
        devices: Vec<DeviceRef>,
    ) -> Result<Decision, ChainError> {
        if devices.is_empty() {
            return Ok(Decision::Decline(NOTHING_RELEVANT.into()));
        }
        let mut view = self.template.device_subset(devices.iter().map(|d| (d.room.as_str(), d.device.as_str())));
        if goal == GoalType::Persistent && !self.chain.config.skip_sensor_filter {
            let sensors = self.filter_sensors(command).await?;
            if sensors.is_empty() {
                return Ok(Decision::Decline(NOTHING_RELEVANT.into()));
            }
            view = view.sensor_subset(sensors.iter().map(|s| (s.scope.as_str(), s.name.as_str())));
        }
        let kind = match goal {
            GoalType::Immediate => PromptKind::PlanImmediate,
            GoalType::Persistent => PromptKind::PlanPersistent,
        };
        self.plan_step(kind, &view, Some(&view), command, goal).await
    }

    async fn plan_step(
        &mut self,
        kind: PromptKind,
        view: &HomeTemplate,
        allowed: Option<&HomeTemplate>,
        command: &str,
        goal: GoalType,
    ) -> Result<Decision, ChainError> {
        let context = self.context();
        let template = self.template;
        let retries = self.chain.config.step_retries;
        let plan = self
            .step(kind, view, command, &context, retries, |raw| plan_result(template, allowed, goal, raw))
            .await?;
        Ok(match plan {
            Some(plan) => Decision::Plan(plan),
            None => Decision::Decline(NOTHING_RELEVANT.into()),
        })
    }

    async fn baseline(&mut self, command: &str, goal: GoalType) -> Result<Decision, ChainError> {
        let kind = match goal {
            GoalType::Immediate => PromptKind::BaselineImmediate,
            GoalType::Persistent => PromptKind::BaselinePersistent,
        };
        let prompt = self.chain.prompts.render_baseline(kind, self.template, command, self.chain.config.baseline_style)?;
        self.started(kind, 0);
        let completion = self
            .chain
            .gateway
            .complete_cancellable(&prompt, &self.chain.config.params, self.cancel)
            .await;
        let mut record = StepRecord {
            step: kind,
            attempt: 0,
            prompt_digest: prompt.digest(),
            completion_digest: None,
            usage: UsageRecord::default(),
            result: StepResult::CannotImprove,
        };
        let completion = match completion {
            Ok(c) => c,
            Err(e) => {
                record.result = StepResult::Failed { message: e.to_string() };
                self.record(record);
                return Err(e.into());
            }
        };
        record.completion_digest = Some(digest_hex(completion.text.as_bytes()));
        record.usage = completion.usage;
        match plan_result(self.template, None, goal, &completion.text) {
            Ok((plan, result)) => {
                record.result = result;
                self.record(record);
                Ok(match plan {
                    Some(plan) => Decision::Plan(plan),
                    None => Decision::Decline(NOTHING_RELEVANT.into()),
                })
            }
            Err(rejection) => {
                record.result = StepResult::Rejected { message: rejection.message.clone(), validity: rejection.validity };
                self.record(record);
                Err(ChainError::InvalidOutput { step: kind, message: rejection.message })
            }
        }
    }
}

fn plan_result(
    template: &HomeTemplate,
    allowed: Option<&HomeTemplate>,
    goal: GoalType,
    raw: &str,
) -> Result<(Option<ActionPlan>, StepResult), Rejection> {
    let (plan, validity) = parse_plan_response(template, allowed, goal, raw)?;
    let json = plan.as_ref().map(ActionPlan::to_json);
    Ok((plan, StepResult::Plan { plan: json, validity }))
}

/// Every device in the plan was selected by the filter and exists in the template.
pub fn subset_monotone(template: &HomeTemplate, trace: &ChainTrace) -> bool {
    let Some(plan) = &trace.parsed_plan else { return true };
    let in_template = plan.touched_devices().iter().all(|(r, d)| template.device(r, d).is_some());
    let in_subset = match &trace.device_subset {
        Some(subset) => plan
            .touched_devices()
            .iter()
            .all(|(r, d)| subset.iter().any(|s| s.room == *r && s.device == *d)),
        None => trace.mode != ChainMode::FullSplit || trace.cache_hit,
    };
    in_template && in_subset
}

/// Changes the plan would make, for callers that only need the diff.
pub fn plan_diff(template: &HomeTemplate, trace: &ChainTrace) -> Option<crate::plan::PlanDiff> {
    trace.parsed_plan.as_ref().map(|p| diff_plan(template, p))
}
