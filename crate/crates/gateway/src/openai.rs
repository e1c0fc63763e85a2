//! OpenAI-compatible chat-completions client.

use std::collections::BTreeMap;
use std::fmt;

use async_trait::async_trait;
use pic_core::records::TokenUsage;
use serde::{Deserialize, Serialize};

use crate::error::{GatewayError, ProviderError, Result};
use crate::provider::Provider;
use crate::spec::{CompletionRequest, ModelSpec, ProviderReply};

/// API key holder whose `Debug` never shows the key.
#[derive(Clone)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        ApiKey(key.into())
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

#[derive(Debug, Clone)]
pub struct OpenAiProvider {
    url: String,
    key: Option<ApiKey>,
    http: reqwest::Client,
}

const MAX_ERROR_BODY: usize = 200;

impl OpenAiProvider {
    pub fn new(base_url: &str, key: Option<ApiKey>, spec: &ModelSpec) -> Result<Self> {
        let http = reqwest::Client::builder()
            .timeout(spec.timeout())
            .build()
            .map_err(|e| GatewayError::Client(e.to_string()))?;
        let base = base_url.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        Ok(OpenAiProvider { url, key, http })
    }

    /// Resolve endpoint and key from the spec and the environment.
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let endpoint = spec
            .endpoint_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|v| !v.trim().is_empty())
            .or_else(|| spec.endpoint.clone())
            .ok_or_else(|| GatewayError::InvalidSpec {
                model: spec.model_name.clone(),
                message: "no endpoint configured".into(),
            })?;
        let key = match &spec.api_key_env {
            Some(var) => Some(ApiKey::new(
                std::env::var(var).map_err(|_| GatewayError::MissingCredential(var.clone()))?,
            )),
            None => None,
        };
        Self::new(&endpoint, key, spec)
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    model: Option<String>,
    #[serde(default)]
    system_fingerprint: Option<String>,
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub fn wire_body(req: &CompletionRequest) -> serde_json::Value {
    let body = WireRequest {
        model: &req.model.model_name,
        messages: req
            .messages
            .iter()
            .map(|m| WireMessage {
                role: match m.role {
                    pic_core::promptkit::Role::System => "system",
                    pic_core::promptkit::Role::User => "user",
                    pic_core::promptkit::Role::Assistant => "assistant",
                },
                content: &m.content,
            })
            .collect(),
        temperature: req.model.temperature,
        max_tokens: req.model.max_tokens,
        seed: req.model.seed,
    };
    serde_json::to_value(body).expect("request serializes")
}

fn truncate(body: &str) -> String {
    let mut out: String = body.chars().take(MAX_ERROR_BODY).collect();
    if body.chars().count() > MAX_ERROR_BODY {
        out.push('…');
    }
    out
}

fn parse_reply(body: &str) -> std::result::Result<ProviderReply, ProviderError> {
    let wire: WireResponse =
        serde_json::from_str(body).map_err(|e| ProviderError::Malformed(e.to_string()))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ProviderError::Malformed("no choices".into()))?;
    let text = choice
        .message
        .content
        .ok_or_else(|| ProviderError::Malformed("choice without content".into()))?;
    let mut meta = BTreeMap::new();
    for (k, v) in [
        ("id", wire.id),
        ("model", wire.model),
        ("system_fingerprint", wire.system_fingerprint),
        ("finish_reason", choice.finish_reason),
    ] {
        if let Some(v) = v {
            meta.insert(k.to_string(), serde_json::Value::String(v));
        }
    }
    let usage = wire.usage.map_or(TokenUsage::default(), |u| TokenUsage {
        prompt_tokens: u.prompt_tokens,
        completion_tokens: u.completion_tokens,
    });
    Ok(ProviderReply { text, usage, meta })
}

#[async_trait]
impl Provider for OpenAiProvider {
    async fn complete(
        &self,
        req: &CompletionRequest,
    ) -> std::result::Result<ProviderReply, ProviderError> {
        let mut builder = self.http.post(&self.url).json(&wire_body(req));
        if let Some(key) = &self.key {
            builder = builder.bearer_auth(&key.0);
        }
        let resp = builder.send().await.map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Transport(e.without_url().to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let body = resp.text().await.map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Transport(e.without_url().to_string())
            }
        })?;
        match status {
            200..=299 => parse_reply(&body),
            401 | 403 => Err(ProviderError::Auth(status)),
            408 => Err(ProviderError::Timeout),
            429 => Err(ProviderError::RateLimited),
            500..=599 => Err(ProviderError::Server {
                status,
                body: truncate(&body),
            }),
            _ => Err(ProviderError::Client {
                status,
                body: truncate(&body),
            }),
        }
    }
}
