//! Token counting and cost estimation.

use serde::{Deserialize, Serialize};

use super::LlmError;

/// Registered scheme ids. `whitespace` is the approximate fallback.
pub const SCHEMES: [&str; 2] = ["cl100k", "whitespace"];

pub fn count_tokens(text: &str, scheme: &str) -> Result<u64, LlmError> {
    match scheme {
        "cl100k" => Ok(tiktoken_rs::cl100k_base_singleton().encode_ordinary(text).len() as u64),
        "whitespace" => Ok(text.split_whitespace().count() as u64),
        other => Err(LlmError::UnknownScheme(other.to_string())),
    }
}

/// Whether counts under this scheme are only an approximation of model tokens.
pub fn is_approximate(scheme: &str) -> bool {
    scheme == "whitespace"
}

/// Dollar rates per 1000 tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRates {
    pub input_per_1k: f64,
    pub output_per_1k: f64,
}

impl CostRates {
    pub const GPT35: CostRates = CostRates { input_per_1k: 0.02, output_per_1k: 0.02 };
    pub const GPT4: CostRates = CostRates { input_per_1k: 0.03, output_per_1k: 0.06 };
    pub const FREE: CostRates = CostRates { input_per_1k: 0.0, output_per_1k: 0.0 };
}

impl Default for CostRates {
    fn default() -> Self {
        CostRates::GPT35
    }
}

/// `(in * rate_in + out * rate_out) / 1000`. Rates must be non-negative.
pub fn estimate_cost(input_tokens: u64, output_tokens: u64, rates: &CostRates) -> f64 {
    (input_tokens as f64 * rates.input_per_1k + output_tokens as f64 * rates.output_per_1k) / 1000.0
}
