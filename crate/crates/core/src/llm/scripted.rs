//! Deterministic fixture-driven backend.

use std::path::Path;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::prompt::{PromptKind, RenderedPrompt};

use super::{normalize_command, BackendReply, GenerationParams, LlmBackend, LlmError};

/// One fixture rule. Absent match fields match anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PromptKind>,
    /// Compared after normalization; `*` matches any command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home: Option<String>,
    /// Case-insensitive substring of the prompt context.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub response: String,
    /// Reported usage; when absent the gateway tokenizer counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
    /// Simulated latency in seconds.
    #[serde(default)]
    pub latency: f64,
}

impl FixtureRule {
    pub fn new(kind: PromptKind, command: &str, home: Option<&str>, response: impl Into<String>) -> Self {
        FixtureRule {
            kind: Some(kind),
            command: Some(command.to_string()),
            home: home.map(str::to_string),
            context: None,
            response: response.into(),
            input_tokens: None,
            output_tokens: None,
            latency: 0.0,
        }
    }

    pub fn with_context(mut self, context: &str) -> Self {
        self.context = Some(context.to_string());
        self
    }

    fn matches(&self, prompt: &RenderedPrompt, command: &str) -> bool {
        self.kind.is_none_or(|k| k == prompt.kind)
            && self.command.as_deref().is_none_or(|c| c == "*" || normalize_command(c) == command)
            && self.home.as_deref().is_none_or(|h| prompt.home_label.as_deref() == Some(h))
            && self
                .context
                .as_deref()
                .is_none_or(|c| prompt.context.to_lowercase().contains(&c.to_lowercase()))
    }
}

/// Ordered rules, evaluated first-match.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedFixture {
    #[serde(default = "one")]
    pub version: u32,
    #[serde(default)]
    pub strict: bool,
    /// Returned on a miss when not strict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
    pub rules: Vec<FixtureRule>,
}

fn one() -> u32 {
    1
}

impl ScriptedFixture {
    pub fn strict(rules: Vec<FixtureRule>) -> Self {
        ScriptedFixture { version: 1, strict: true, fallback: None, rules }
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        serde_json::from_str(text).map_err(|e| LlmError::Config(format!("fixture: {e}")))
    }

    /// A fixture file, or every `*.json` in a directory in name order.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| LlmError::Config(format!("{}: {e}", p.display())))
        };
        if !path.is_dir() {
            return Self::from_json(&read(path)?);
        }
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut merged: Option<ScriptedFixture> = None;
        for file in files {
            let next = Self::from_json(&read(&file)?)?;
            merged = Some(match merged {
                None => next,
                Some(acc) => acc.then(next),
            });
        }
        merged.ok_or_else(|| LlmError::Config(format!("no fixture files in {}", path.display())))
    }

    /// Rules of `self` take precedence; the result is strict if either is.
    pub fn then(mut self, other: ScriptedFixture) -> Self {
        self.strict |= other.strict;
        self.fallback = self.fallback.or(other.fallback);
        self.rules.extend(other.rules);
        self
    }

    pub fn lookup(&self, prompt: &RenderedPrompt) -> Option<&FixtureRule> {
        let command = normalize_command(&prompt.command);
        self.rules.iter().find(|r| r.matches(prompt, &command))
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    fixture: ScriptedFixture,
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptedFixture) -> Self {
        ScriptedBackend { fixture }
    }

    pub fn fixture(&self) -> &ScriptedFixture {
        &self.fixture
    }
}

#[async_trait]
impl LlmBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    async fn complete(&self, prompt: &RenderedPrompt, _params: &GenerationParams) -> Result<BackendReply, LlmError> {
        match self.fixture.lookup(prompt) {
            Some(rule) => Ok(BackendReply {
                text: rule.response.clone(),
                input_tokens: rule.input_tokens,
                output_tokens: rule.output_tokens,
                latency: Some(rule.latency),
            }),
            None => match (&self.fixture.fallback, self.fixture.strict) {
                (Some(text), false) => Ok(BackendReply { text: text.clone(), latency: Some(0.0), ..Default::default() }),
                _ => Err(LlmError::FixtureMiss {
                    kind: prompt.kind,
                    command: prompt.command.clone(),
                    home: prompt.home_label.clone(),
                }),
            },
        }
    }
}
