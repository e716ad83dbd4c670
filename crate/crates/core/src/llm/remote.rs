//! Chat-completion HTTP backend.

use std::path::Path;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::prompt::RenderedPrompt;

use super::{BackendReply, CostRates, GenerationParams, LlmBackend, LlmError};

pub const API_KEY_VAR: &str = "LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full chat-completions endpoint URL.
    pub url: String,
    pub model: String,
    #[serde(default)]
    pub rates: CostRates,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_tokenizer")]
    pub tokenizer: String,
}

fn default_timeout() -> u64 {
    180
}

fn default_tokenizer() -> String {
    "cl100k".into()
}

impl RemoteConfig {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: Option<String>,
    client: reqwest::Client,
}

impl RemoteBackend {
    /// Reads the API key from `LLM_API_KEY`.
    pub fn new(config: RemoteConfig) -> Result<Self, LlmError> {
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| LlmError::Config(format!("http client: {e}")))?;
        Ok(RemoteBackend { config, api_key: std::env::var(API_KEY_VAR).ok(), client })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }
}

#[async_trait]
impl LlmBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    async fn complete(&self, prompt: &RenderedPrompt, params: &GenerationParams) -> Result<BackendReply, LlmError> {
        let model = if params.model.is_empty() { &self.config.model } else { &params.model };
        let body = json!({
            "model": model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        });
        let mut request = self.client.post(&self.config.url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().await.map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 {
            return Err(LlmError::RateLimited);
        }
        if status.is_server_error() {
            return Err(LlmError::BackendUnavailable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let detail = response.text().await.unwrap_or_default();
            return Err(LlmError::Config(format!("HTTP {status}: {detail}")));
        }
        let doc: Value = response.json().await.map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        parse_chat_response(&doc)
    }
}

pub(crate) fn parse_chat_response(doc: &Value) -> Result<BackendReply, LlmError> {
    let text = doc["choices"][0]["message"]["content"]
        .as_str()
        .or_else(|| doc["choices"][0]["text"].as_str())
        .ok_or_else(|| LlmError::BackendUnavailable("response has no completion text".into()))?;
    Ok(BackendReply {
        text: text.to_string(),
        input_tokens: doc["usage"]["prompt_tokens"].as_u64(),
        output_tokens: doc["usage"]["completion_tokens"].as_u64(),
        latency: None,
    })
}
