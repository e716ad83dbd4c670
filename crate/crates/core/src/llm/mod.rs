//! Completion gateway over interchangeable backends, with usage accounting.

mod remote;
mod scripted;
mod tokens;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use tokio_util::sync::CancellationToken;

use crate::prompt::{PromptKind, RenderedPrompt};

pub use remote::{RemoteBackend, RemoteConfig, API_KEY_VAR};
pub use scripted::{FixtureRule, ScriptedBackend, ScriptedFixture};
pub use tokens::{count_tokens, estimate_cost, is_approximate, CostRates, SCHEMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    /// In `[0, 2]`.
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Empty means the backend default.
    pub model: String,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams { temperature: 0.0, max_output_tokens: 1024, model: String::new() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Wall-clock seconds.
    pub latency: f64,
    pub estimated_cost: f64,
    /// Token counts come from the whitespace fallback.
    #[serde(default)]
    pub approximate: bool,
}

impl UsageRecord {
    pub fn total_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }

    pub fn add(&mut self, other: &UsageRecord) {
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.latency += other.latency;
        self.estimated_cost += other.estimated_cost;
        self.approximate |= other.approximate;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: UsageRecord,
}

/// Raw backend output before accounting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
    /// Overrides measured latency; scripted replies report their fixture value.
    pub latency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("backend did not answer within {0:?}")]
    Timeout(Duration),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no fixture for {kind} {command:?} in home {home:?}")]
    FixtureMiss { kind: PromptKind, command: String, home: Option<String> },
    #[error("rate limited")]
    RateLimited,
    #[error("request cancelled")]
    Cancelled,
    #[error("unknown tokenizer scheme {0:?}")]
    UnknownScheme(String),
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("configuration error: {0}")]
    Config(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::RateLimited | LlmError::BackendUnavailable(_))
    }
}

#[async_trait]
pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;
    async fn complete(&self, prompt: &RenderedPrompt, params: &GenerationParams) -> Result<BackendReply, LlmError>;
}

/// Lowercase, trimmed, internal whitespace collapsed.
pub fn normalize_command(command: &str) -> String {
    command.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub timeout: Duration,
    /// Extra attempts after the first for retryable errors.
    pub max_retries: u32,
    /// Doubled after every retry.
    pub backoff: Duration,
    pub concurrency: usize,
    pub rates: CostRates,
    pub tokenizer: String,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            timeout: Duration::from_secs(180),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            concurrency: 8,
            rates: CostRates::default(),
            tokenizer: "cl100k".into(),
        }
    }
}

/// Shared entry point for all model calls.
pub struct Gateway {
    backend: Arc<dyn LlmBackend>,
    config: GatewayConfig,
    permits: Semaphore,
    calls: AtomicU64,
}

impl Gateway {
    pub fn new(backend: Arc<dyn LlmBackend>, config: GatewayConfig) -> Result<Self, LlmError> {
        count_tokens("", &config.tokenizer)?;
        if config.concurrency == 0 {
            return Err(LlmError::Config("concurrency must be positive".into()));
        }
        Ok(Gateway { permits: Semaphore::new(config.concurrency), backend, config, calls: AtomicU64::new(0) })
    }

    pub fn scripted(fixture: ScriptedFixture) -> Self {
        Gateway::new(Arc::new(ScriptedBackend::new(fixture)), GatewayConfig::default())
            .expect("default gateway config is valid")
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// Backend invocations so far, retries included.
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub async fn complete(&self, prompt: &RenderedPrompt, params: &GenerationParams) -> Result<Completion, LlmError> {
        self.complete_cancellable(prompt, params, &CancellationToken::new()).await
    }

    pub async fn complete_cancellable(
        &self,
        prompt: &RenderedPrompt,
        params: &GenerationParams,
        cancel: &CancellationToken,
    ) -> Result<Completion, LlmError> {
        if !(0.0..=2.0).contains(&params.temperature) {
            return Err(LlmError::Config(format!("temperature {} outside [0, 2]", params.temperature)));
        }
        let _permit = tokio::select! {
            permit = self.permits.acquire() => permit.map_err(|_| LlmError::Cancelled)?,
            _ = cancel.cancelled() => return Err(LlmError::Cancelled),
        };
        let mut delay = self.config.backoff;
        let mut attempt = 0;
        loop {
            let started = Instant::now();
            self.calls.fetch_add(1, Ordering::SeqCst);
            let result = tokio::select! {
                r = tokio::time::timeout(self.config.timeout, self.backend.complete(prompt, params)) => {
                    r.unwrap_or(Err(LlmError::Timeout(self.config.timeout)))
                }
                _ = cancel.cancelled() => return Err(LlmError::Cancelled),
            };
            match result {
                Ok(reply) => return self.account(prompt, reply, started.elapsed()),
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    attempt += 1;
                    tracing::warn!(error = %e, attempt, "retrying model call");
                    tokio::select! {
                        _ = tokio::time::sleep(delay) => {}
                        _ = cancel.cancelled() => return Err(LlmError::Cancelled),
                    }
                    delay *= 2;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn account(&self, prompt: &RenderedPrompt, reply: BackendReply, elapsed: Duration) -> Result<Completion, LlmError> {
        if reply.text.is_empty() {
            return Err(LlmError::EmptyCompletion);
        }
        let scheme = &self.config.tokenizer;
        let mut approximate = false;
        let mut count = |reported: Option<u64>, text: &str| -> Result<u64, LlmError> {
            match reported {
                Some(n) => Ok(n),
                None => {
                    approximate |= is_approximate(scheme);
                    count_tokens(text, scheme)
                }
            }
        };
        let input_tokens = count(reply.input_tokens, &prompt.text)?;
        let output_tokens = count(reply.output_tokens, &reply.text)?;
        Ok(Completion {
            usage: UsageRecord {
                input_tokens,
                output_tokens,
                latency: reply.latency.unwrap_or(elapsed.as_secs_f64()),
                estimated_cost: estimate_cost(input_tokens, output_tokens, &self.config.rates),
                approximate,
            },
            text: reply.text,
        })
    }
}
