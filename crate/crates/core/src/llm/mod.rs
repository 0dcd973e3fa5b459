//! Multimodal LLM endpoint client: prompts, calls, strict reply parsing.

mod client;
pub mod mock;
mod parse;
mod template;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use client::{generate_suggestions, judge_score, summarize_intent, CallRecord, Client};
pub use parse::{parse_intent_response, parse_scorecard, parse_suggestions, strip_fences};
pub use template::{chat_body, render_prompt, ImagePayload, PromptTemplate, RenderedPrompt, TemplateKind, TemplateSet};

pub const ENV_API_BASE: &str = "FCMIR_API_BASE";
pub const ENV_API_KEY: &str = "FCMIR_API_KEY";

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Never serialized; comes from `FCMIR_API_KEY`.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub max_images: usize,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// Screenshots wider than this are downscaled before upload (384 for the fast setting).
    pub image_width: usize,
    /// First backoff delay; doubles on every retry.
    pub retry_base_ms: u64,
    /// Model name for `/embeddings`; unset means the offline hashing embedder.
    pub embedding_model: Option<String>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8089/v1".into(),
            model: "doubao-1.5-thinking-vision-pro".into(),
            api_key: None,
            max_images: 16,
            timeout_s: 120.0,
            max_retries: 3,
            max_in_flight: 4,
            image_width: 512,
            retry_base_ms: 500,
            embedding_model: None,
        }
    }
}

impl std::fmt::Debug for EndpointConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EndpointConfig")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("max_images", &self.max_images)
            .field("timeout_s", &self.timeout_s)
            .field("max_retries", &self.max_retries)
            .field("max_in_flight", &self.max_in_flight)
            .field("image_width", &self.image_width)
            .field("retry_base_ms", &self.retry_base_ms)
            .field("embedding_model", &self.embedding_model)
            .finish()
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight == 0 {
            return Err(Error::Config("endpoint.max_in_flight must be at least 1".into()));
        }
        if self.max_images == 0 {
            return Err(Error::Config("endpoint.max_images must be at least 1".into()));
        }
        if self.image_width == 0 {
            return Err(Error::Config("endpoint.image_width must be positive".into()));
        }
        if !(self.timeout_s > 0.0) {
            return Err(Error::Config("endpoint.timeout_s must be positive".into()));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(Error::Config(format!("endpoint.base_url is not an http(s) URL: {}", self.base_url)));
        }
        Ok(())
    }

    /// Overrides `base_url` and `api_key` from the environment when set.
    pub fn apply_env(&mut self) {
        if let Ok(base) = std::env::var(ENV_API_BASE) {
            if !base.trim().is_empty() {
                self.base_url = base.trim().to_owned();
            }
        }
        if let Ok(key) = std::env::var(ENV_API_KEY) {
            if !key.trim().is_empty() {
                self.api_key = Some(key.trim().to_owned());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentSummary {
    pub operation: String,
    pub intent: String,
}

impl IntentSummary {
    /// The reply shape the summarize template asks for.
    pub fn to_response_json(&self) -> String {
        serde_json::json!({ "Operation": self.operation, "Intent": self.intent }).to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionKind {
    Operation,
    Search,
}

impl SuggestionKind {
    pub fn template_kind(self) -> TemplateKind {
        match self {
            SuggestionKind::Operation => TemplateKind::SuggestOperation,
            SuggestionKind::Search => TemplateKind::SuggestSearch,
        }
    }
}

impl std::str::FromStr for SuggestionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "operation" => Ok(SuggestionKind::Operation),
            "search" => Ok(SuggestionKind::Search),
            other => Err(Error::InvalidParam(format!("unknown suggestion kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionSet {
    pub kind: SuggestionKind,
    pub suggestions: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_is_not_serialized() {
        let cfg = EndpointConfig {
            api_key: Some("sk-secret".into()),
            ..Default::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        assert!(!text.contains("sk-secret"));
        assert!(!format!("{cfg:?}").contains("sk-secret"));
    }

    #[test]
    fn validation() {
        assert!(EndpointConfig::default().validate().is_ok());
        let bad = EndpointConfig {
            max_in_flight: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EndpointConfig {
            base_url: "localhost:80".into(),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
