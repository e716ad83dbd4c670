//! Prompt rendering for baseline prompts and reasoning-chain steps.
//!
//! Wording lives in versioned text files with `{{name}}` placeholders. A line
//! holding only a placeholder that renders empty is dropped.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::home::{digest_hex, HomeTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    ZeroShotInstruction,
    /// Completion format with exactly two worked examples.
    FewShotCompletion,
}

impl PromptStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptStyle::ZeroShotInstruction => "zero_shot_instruction",
            PromptStyle::FewShotCompletion => "few_shot_completion",
        }
    }
}

impl FromStr for PromptStyle {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero_shot_instruction" | "zero_shot" => Ok(PromptStyle::ZeroShotInstruction),
            "few_shot_completion" | "few_shot" => Ok(PromptStyle::FewShotCompletion),
            other => Err(PromptError::UnknownName(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    BaselineImmediate,
    BaselinePersistent,
    Clarify,
    FilterDevices,
    FilterSensors,
    PlanImmediate,
    PlanPersistent,
    FeedbackRevise,
    /// Relevance verdict and device subset in one prompt.
    ClarifyFilter,
    /// Device selection and planning in one prompt.
    FilterPlanImmediate,
    FilterPlanPersistent,
    /// Immediate vs persistent inference for interactive sessions.
    ClassifyGoal,
}

impl PromptKind {
    pub const ALL: [PromptKind; 12] = [
        PromptKind::BaselineImmediate,
        PromptKind::BaselinePersistent,
        PromptKind::Clarify,
        PromptKind::FilterDevices,
        PromptKind::FilterSensors,
        PromptKind::PlanImmediate,
        PromptKind::PlanPersistent,
        PromptKind::FeedbackRevise,
        PromptKind::ClarifyFilter,
        PromptKind::FilterPlanImmediate,
        PromptKind::FilterPlanPersistent,
        PromptKind::ClassifyGoal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::BaselineImmediate => "baseline_immediate",
            PromptKind::BaselinePersistent => "baseline_persistent",
            PromptKind::Clarify => "clarify",
            PromptKind::FilterDevices => "filter_devices",
            PromptKind::FilterSensors => "filter_sensors",
            PromptKind::PlanImmediate => "plan_immediate",
            PromptKind::PlanPersistent => "plan_persistent",
            PromptKind::FeedbackRevise => "feedback_revise",
            PromptKind::ClarifyFilter => "clarify_filter",
            PromptKind::FilterPlanImmediate => "filter_plan_immediate",
            PromptKind::FilterPlanPersistent => "filter_plan_persistent",
            PromptKind::ClassifyGoal => "classify_goal",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, PromptKind::BaselineImmediate | PromptKind::BaselinePersistent)
    }

    /// Kinds that only occur for persistent goals.
    pub fn persistent_only(self) -> bool {
        matches!(
            self,
            PromptKind::BaselinePersistent
                | PromptKind::FilterSensors
                | PromptKind::PlanPersistent
                | PromptKind::FilterPlanPersistent
        )
    }

    fn template_name(self, style: PromptStyle) -> String {
        match (self.is_baseline(), style) {
            (true, PromptStyle::ZeroShotInstruction) => format!("{}.zero_shot", self.as_str()),
            (true, PromptStyle::FewShotCompletion) => format!("{}.few_shot", self.as_str()),
            (false, _) => self.as_str().to_string(),
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| PromptError::UnknownName(s.to_string()))
    }
}

/// Optional inputs to chain-step prompts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    /// Follow-up information from the user, oldest first.
    pub clarifications: Vec<String>,
    /// Canonical JSON of the plan under revision.
    pub prior_plan: Option<String>,
    pub critique: Option<String>,
    /// Validation error from the previous attempt at this step.
    pub retry_error: Option<String>,
    /// Include the sensors document in a feedback prompt.
    pub persistent: bool,
}

impl PromptContext {
    pub fn with_clarifications(clarifications: &[String]) -> Self {
        PromptContext { clarifications: clarifications.to_vec(), ..Default::default() }
    }

    /// Flattened context used for fixture matching.
    pub fn summary(&self) -> String {
        let mut parts: Vec<String> = self.clarifications.clone();
        parts.extend(self.critique.iter().cloned());
        parts.extend(self.retry_error.iter().map(|e| format!("retry: {e}")));
        parts.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    pub style: PromptStyle,
    pub text: String,
    /// Digest of the template (or subset) embedded in the text.
    pub template_digest: String,
    pub command: String,
    pub home_label: Option<String>,
    pub context: String,
}

impl RenderedPrompt {
    pub fn digest(&self) -> String {
        digest_hex(self.text.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("command is empty")]
    EmptyCommand,
    #[error("{0} has no few-shot form")]
    StyleUnsupported(PromptKind),
    #[error("{kind} requires {what}")]
    MissingContext { kind: PromptKind, what: &'static str },
    #[error("{0} is not valid for this operation")]
    WrongKind(PromptKind),
    #[error("no prompt template named {0}")]
    MissingTemplate(String),
    #[error("unknown placeholder {{{{{0}}}}}")]
    UnknownPlaceholder(String),
    #[error("unknown name {0:?}")]
    UnknownName(String),
    #[error("io error: {0}")]
    Io(String),
}

const TEMPLATE_NAMES: [&str; 15] = [
    "baseline_immediate.zero_shot",
    "baseline_immediate.few_shot",
    "baseline_persistent.zero_shot",
    "baseline_persistent.few_shot",
    "clarify",
    "filter_devices",
    "filter_sensors",
    "plan_immediate",
    "plan_persistent",
    "feedback_revise",
    "clarify_filter",
    "filter_plan_immediate",
    "filter_plan_persistent",
    "classify_goal",
    "retry",
];

/// A complete, versioned set of prompt templates.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub version: String,
    templates: HashMap<String, String>,
}

macro_rules! shipped {
    ($($name:literal),* $(,)?) => {
        [$(($name, include_str!(concat!("../../prompts/v1/", $name, ".txt")))),*]
    };
}

impl PromptSet {
    pub fn builtin() -> &'static PromptSet {
        static SET: OnceLock<PromptSet> = OnceLock::new();
        SET.get_or_init(|| {
            let files = shipped!(
                "baseline_immediate.zero_shot",
                "baseline_immediate.few_shot",
                "baseline_persistent.zero_shot",
                "baseline_persistent.few_shot",
                "clarify",
                "filter_devices",
                "filter_sensors",
                "plan_immediate",
                "plan_persistent",
                "feedback_revise",
                "clarify_filter",
                "filter_plan_immediate",
                "filter_plan_persistent",
                "classify_goal",
                "retry",
            );
            PromptSet {
                version: "v1".into(),
                templates: files.iter().map(|(n, t)| (n.to_string(), t.to_string())).collect(),
            }
        })
    }

    /// Load `<name>.txt` for every template name from a directory.
    pub fn from_dir(dir: &Path) -> Result<PromptSet, PromptError> {
        let mut templates = HashMap::new();
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
            templates.insert(name.to_string(), text);
        }
        let version = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(PromptSet { version, templates })
    }

    fn template(&self, name: &str) -> Result<&str, PromptError> {
        self.templates
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| PromptError::MissingTemplate(name.to_string()))
    }

    pub fn render_baseline(
        &self,
        kind: PromptKind,
        template: &HomeTemplate,
        command: &str,
        style: PromptStyle,
    ) -> Result<RenderedPrompt, PromptError> {
        if !kind.is_baseline() {
            return Err(PromptError::WrongKind(kind));
        }
        let command = command.trim();
        if command.is_empty() {
            return Err(PromptError::EmptyCommand);
        }
        let devices = template.devices_pretty();
        let sensors = template.sensors_pretty();
        let vars = [("devices", devices.as_str()), ("sensors", sensors.as_str()), ("command", command)];
        let text = substitute(self.template(&kind.template_name(style))?, &vars)?;
        Ok(RenderedPrompt {
            kind,
            style,
            text,
            template_digest: template.digest(),
            command: command.to_string(),
            home_label: template.label().map(str::to_string),
            context: String::new(),
        })
    }

    /// Render one chain step. `template` is whatever the step should see: the
    /// full home, or a device and sensor subset for planning.
    pub fn render_chain_step(
        &self,
        kind: PromptKind,
        template: &HomeTemplate,
        command: &str,
        context: &PromptContext,
    ) -> Result<RenderedPrompt, PromptError> {
        if kind.is_baseline() {
            return Err(PromptError::WrongKind(kind));
        }
        let command = command.trim();
        if command.is_empty() {
            return Err(PromptError::EmptyCommand);
        }
        if kind == PromptKind::FeedbackRevise {
            if context.prior_plan.is_none() {
                return Err(PromptError::MissingContext { kind, what: "a prior plan" });
            }
            if context.critique.as_deref().is_none_or(|c| c.trim().is_empty()) {
                return Err(PromptError::MissingContext { kind, what: "a critique" });
            }
        }
        let devices = template.devices_pretty();
        let sensors = template.sensors_pretty();
        let sensors_block = if context.persistent { format!("Sensors:\n{sensors}") } else { String::new() };
        let clarifications = context
            .clarifications
            .iter()
            .map(|c| format!("Additional information from the user: {}", c.trim()))
            .collect::<Vec<_>>()
            .join("\n");
        let vars = [
            ("devices", devices.as_str()),
            ("sensors", sensors.as_str()),
            ("sensors_block", sensors_block.as_str()),
            ("command", command),
            ("clarifications", clarifications.as_str()),
            ("prior_plan", context.prior_plan.as_deref().unwrap_or("")),
            ("critique", context.critique.as_deref().unwrap_or("")),
        ];
        let mut text = substitute(self.template(&kind.template_name(PromptStyle::ZeroShotInstruction))?, &vars)?;
        if let Some(error) = &context.retry_error {
            text.push_str(&substitute(self.template("retry")?, &[("error", error.as_str())])?);
        }
        Ok(RenderedPrompt {
            kind,
            style: PromptStyle::ZeroShotInstruction,
            text,
            template_digest: template.digest(),
            command: command.to_string(),
            home_label: template.label().map(str::to_string),
            context: context.summary(),
        })
    }

    /// Chain steps have no few-shot form.
    pub fn render_chain_step_styled(
        &self,
        kind: PromptKind,
        template: &HomeTemplate,
        command: &str,
        context: &PromptContext,
        style: PromptStyle,
    ) -> Result<RenderedPrompt, PromptError> {
        if style == PromptStyle::FewShotCompletion && !kind.is_baseline() {
            return Err(PromptError::StyleUnsupported(kind));
        }
        self.render_chain_step(kind, template, command, context)
    }
}

pub fn render_baseline(
    kind: PromptKind,
    template: &HomeTemplate,
    command: &str,
    style: PromptStyle,
) -> Result<RenderedPrompt, PromptError> {
    PromptSet::builtin().render_baseline(kind, template, command, style)
}

pub fn render_chain_step(
    kind: PromptKind,
    template: &HomeTemplate,
    command: &str,
    context: &PromptContext,
) -> Result<RenderedPrompt, PromptError> {
    PromptSet::builtin().render_chain_step(kind, template, command, context)
}

/// Single-pass `{{name}}` substitution; substituted text is never rescanned.
fn substitute(template: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let lookup = |name: &str| {
        vars.iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| PromptError::UnknownPlaceholder(name.to_string()))
    };
    let mut out = String::with_capacity(template.len() * 2);
    for line in template.split_inclusive('\n') {
        let body = line.trim_end_matches('\n');
        if let Some(name) = body.strip_prefix("{{").and_then(|r| r.strip_suffix("}}")) {
            if !name.contains('{') && lookup(name)?.is_empty() {
                continue;
            }
        }
        let mut rest = line;
        while let Some(start) = rest.find("{{") {
            let Some(len) = rest[start + 2..].find("}}") else { break };
            out.push_str(&rest[..start]);
            out.push_str(lookup(&rest[start + 2..start + 2 + len])?);
            rest = &rest[start + 2 + len + 2..];
        }
        out.push_str(rest);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::home::{builtin_home, BuiltinHomeId};

    #[test]
    fn immediate_zero_shot_block() {
        let p = render_baseline(
            PromptKind::BaselineImmediate,
            &builtin_home(BuiltinHomeId::H1),
            "make it less chilly in here",
            PromptStyle::ZeroShotInstruction,
        )
        .unwrap();
        assert!(p.text.starts_with("You are an AI that controls a smart home. You receive user commands and assign settings to devices in response. Devices:\n{\n    \"entry\": {"));
        assert!(p.text.contains("User command: make it less chilly in here\nAssign appropriate settings to the relevant devices. Do not change the values of sensors. Respond with JSON. Include an \"explanation\" field in the JSON.\n"));
        assert!(!p.text.contains("{{"));
    }

    #[test]
    fn persistent_zero_shot_has_skeleton_and_sensors() {
        let t = builtin_home(BuiltinHomeId::H3);
        let p = render_baseline(PromptKind::BaselinePersistent, &t, "I need coffee in the morning", PromptStyle::ZeroShotInstruction)
            .unwrap();
        assert!(p.text.ends_with("{\"trigger\": {}, \"action\": {}, \"explanation\": \"\"}\n"));
        assert!(p.text.contains(&format!("Sensors:\n{}\n", t.sensors_pretty())));
        let again = render_baseline(PromptKind::BaselinePersistent, &t, "I need coffee in the morning", PromptStyle::ZeroShotInstruction)
            .unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn few_shot_has_two_examples() {
        let t = builtin_home(BuiltinHomeId::H2);
        for kind in [PromptKind::BaselineImmediate, PromptKind::BaselinePersistent] {
            let p = render_baseline(kind, &t, "make it cozy in here", PromptStyle::FewShotCompletion).unwrap();
            assert_eq!(p.text.matches("###\n").count(), 2);
            assert_eq!(p.text.matches("User command: ").count(), 3);
        }
        let p = render_baseline(PromptKind::BaselinePersistent, &t, "x", PromptStyle::FewShotCompletion).unwrap();
        assert!(p.text.contains(r#"{"trigger": {"global": {"local_time": "9:00PM"}}, "action": {"livingroom": {"overhead_light": {"state": false}}}}"#));
        assert!(p.text.trim_end().ends_with("Automation JSON:"));
    }

    #[test]
    fn chain_step_contracts() {
        let t = builtin_home(BuiltinHomeId::H1);
        let set = PromptSet::builtin();
        let ctx = PromptContext::default();
        assert!(matches!(
            set.render_chain_step_styled(PromptKind::Clarify, &t, "I'm tired", &ctx, PromptStyle::FewShotCompletion),
            Err(PromptError::StyleUnsupported(PromptKind::Clarify))
        ));
        assert!(matches!(
            render_chain_step(PromptKind::FeedbackRevise, &t, "x", &ctx),
            Err(PromptError::MissingContext { .. })
        ));
        assert!(matches!(render_chain_step(PromptKind::Clarify, &t, "  ", &ctx), Err(PromptError::EmptyCommand)));
        assert!(matches!(
            render_baseline(PromptKind::Clarify, &t, "x", PromptStyle::ZeroShotInstruction),
            Err(PromptError::WrongKind(_))
        ));

        let clarify = render_chain_step(PromptKind::Clarify, &t, "I'm tired", &ctx).unwrap();
        assert!(clarify.text.contains("RELEVANT: true"));
        assert!(!clarify.text.contains("Additional information"));
        assert!(!clarify.text.contains("\n\n"));

        let ctx = PromptContext::with_clarifications(&["first".into(), "I need help waking up".into()]);
        let clarify = render_chain_step(PromptKind::Clarify, &t, "I'm tired", &ctx).unwrap();
        let first = clarify.text.find("user: first").unwrap();
        let second = clarify.text.find("user: I need help waking up").unwrap();
        assert!(first < second);
    }

    #[test]
    fn sensor_filter_sees_only_sensors() {
        let t = builtin_home(BuiltinHomeId::H3);
        let p = render_chain_step(PromptKind::FilterSensors, &t, "I need coffee in the morning", &PromptContext::default())
            .unwrap();
        assert!(p.text.contains("local_time"));
        assert!(!p.text.contains("coffee_maker"));
    }

    #[test]
    fn feedback_embeds_critique_and_plan() {
        let t = builtin_home(BuiltinHomeId::H1);
        let ctx = PromptContext {
            prior_plan: Some(r#"{"entry": {"overhead_light": {"state": true}}}"#.into()),
            critique: Some("you don't need to turn on the amp".into()),
            ..Default::default()
        };
        let p = render_chain_step(PromptKind::FeedbackRevise, &t, "make the living room nice", &ctx).unwrap();
        assert!(p.text.contains("User feedback: you don't need to turn on the amp"));
        assert!(p.text.contains(r#"{"entry": {"overhead_light": {"state": true}}}"#));
        assert!(!p.text.contains("Sensors:"));
    }

    #[test]
    fn retry_appends_error() {
        let t = builtin_home(BuiltinHomeId::H1);
        let ctx = PromptContext { retry_error: Some("unknown room garage".into()), ..Default::default() };
        let p = render_chain_step(PromptKind::FilterDevices, &t, "lock up", &ctx).unwrap();
        assert!(p.text.contains("Your previous response was rejected: unknown room garage\n"));
        assert!(p.context.contains("retry: unknown room garage"));
    }

    #[test]
    fn substitution_is_single_pass() {
        let out = substitute("a {{x}} b\n", &[("x", "{{x}}")]).unwrap();
        assert_eq!(out, "a {{x}} b\n");
        assert!(matches!(substitute("{{nope}}", &[]), Err(PromptError::UnknownPlaceholder(_))));
    }

    #[test]
    fn every_kind_renders() {
        let t = builtin_home(BuiltinHomeId::H3);
        let ctx = PromptContext { prior_plan: Some("{}".into()), critique: Some("c".into()), ..Default::default() };
        for kind in PromptKind::ALL {
            let r = if kind.is_baseline() {
                render_baseline(kind, &t, "c", PromptStyle::FewShotCompletion)
            } else {
                render_chain_step(kind, &t, "c", &ctx)
            };
            assert!(r.is_ok(), "{kind}: {r:?}");
        }
    }

    #[test]
    fn prompt_dir_matches_builtin() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("prompts/v1");
        let loaded = PromptSet::from_dir(&dir).unwrap();
        assert_eq!(&loaded, PromptSet::builtin());
    }
}
