//! Model specification, request and response types.

use std::collections::BTreeMap;
use std::time::Duration;

use pic_core::promptkit::{Message, RenderedPrompt};
use pic_core::records::TokenUsage;
use pic_core::text::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::error::{GatewayError, Result};

pub const DEFAULT_MAX_TOKENS: u32 = 1024;
pub const DEFAULT_TIMEOUT_SECS: u64 = 120;
pub const DEFAULT_MAX_RETRIES: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    OpenaiCompatible,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateLimit {
    pub requests: u32,
    pub window_secs: u64,
}

impl RateLimit {
    pub fn window(&self) -> Duration {
        Duration::from_secs(self.window_secs)
    }
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECS
}

fn default_retries() -> u32 {
    DEFAULT_MAX_RETRIES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub provider: ProviderKind,
    pub model_name: String,
    /// Base URL; `/chat/completions` is appended.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Environment variable that overrides `endpoint` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_env: Option<String>,
    /// Environment variable holding the API key. The key itself is never
    /// part of a spec.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    /// Must be set to run with a non-zero temperature.
    #[serde(default)]
    pub allow_nonzero_temperature: bool,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit: Option<RateLimit>,
}

impl ModelSpec {
    pub fn new(provider: ProviderKind, model_name: impl Into<String>) -> Self {
        ModelSpec {
            provider,
            model_name: model_name.into(),
            endpoint: None,
            endpoint_env: None,
            api_key_env: None,
            temperature: 0.0,
            allow_nonzero_temperature: false,
            max_tokens: DEFAULT_MAX_TOKENS,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
            max_retries: DEFAULT_MAX_RETRIES,
            seed: None,
            rate_limit: None,
        }
    }

    pub fn mock(model_name: impl Into<String>) -> Self {
        Self::new(ProviderKind::Mock, model_name)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: &str| GatewayError::InvalidSpec {
            model: self.model_name.clone(),
            message: message.to_string(),
        };
        if self.model_name.trim().is_empty() {
            return Err(invalid("model_name is empty"));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(invalid("temperature must be a non-negative number"));
        }
        if self.temperature != 0.0 && !self.allow_nonzero_temperature {
            return Err(invalid(
                "temperature is pinned to 0; set allow_nonzero_temperature to override",
            ));
        }
        if self.max_tokens == 0 {
            return Err(invalid("max_tokens must be at least 1"));
        }
        if self.timeout_secs == 0 {
            return Err(invalid("timeout_secs must be at least 1"));
        }
        if let Some(rl) = self.rate_limit {
            if rl.requests == 0 || rl.window_secs == 0 {
                return Err(invalid("rate_limit needs requests >= 1 and window_secs >= 1"));
            }
        }
        if self.provider == ProviderKind::OpenaiCompatible
            && self.endpoint.is_none()
            && self.endpoint_env.is_none()
        {
            return Err(invalid("endpoint or endpoint_env is required"));
        }
        Ok(())
    }

    /// Sampling parameters that enter the request hash.
    pub fn params(&self) -> RequestParams {
        RequestParams {
            provider: self.provider,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RequestParams {
    pub provider: ProviderKind,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct HashInput<'a> {
    model_name: &'a str,
    params: RequestParams,
    prompt_hash: &'a str,
}

/// sha256 over the compact JSON of `{model_name, params, prompt_hash}`.
pub fn request_hash(model: &ModelSpec, prompt_hash: &str) -> String {
    let input = HashInput {
        model_name: &model.model_name,
        params: model.params(),
        prompt_hash,
    };
    sha256_hex(&serde_json::to_vec(&input).expect("hash input serializes"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub model: ModelSpec,
    pub messages: Vec<Message>,
    pub prompt_hash: String,
    pub request_hash: String,
}

impl CompletionRequest {
    pub fn new(model: ModelSpec, prompt: &RenderedPrompt) -> Self {
        let request_hash = request_hash(&model, &prompt.prompt_hash);
        CompletionRequest {
            model,
            messages: prompt.messages.clone(),
            prompt_hash: prompt.prompt_hash.clone(),
            request_hash,
        }
    }
}

/// What a provider returns for one successful attempt.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProviderReply {
    pub text: String,
    pub usage: TokenUsage,
    pub meta: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub request_hash: String,
    pub model_name: String,
    pub prompt_hash: String,
    pub text: String,
    pub usage: TokenUsage,
    /// Latency of the original call, also when served from cache.
    pub latency_ms: u64,
    /// RFC 3339 time of the original call.
    pub timestamp: String,
    #[serde(default)]
    pub provider_meta: BTreeMap<String, serde_json::Value>,
    #[serde(skip)]
    pub from_cache: bool,
}
