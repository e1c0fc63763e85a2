//! Deterministic offline provider.

use std::collections::HashMap;
use std::str::FromStr;

use async_trait::async_trait;
use pic_core::label::ToxicityLabel;
use pic_core::records::TokenUsage;

use crate::error::ProviderError;
use crate::provider::Provider;
use crate::spec::{CompletionRequest, ProviderReply};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockFallback {
    /// Always answer with this text.
    Constant(String),
    /// Answer `答案：X` with X picked from the request hash.
    HashPick,
}

impl Default for MockFallback {
    fn default() -> Self {
        MockFallback::Constant("A".into())
    }
}

impl FromStr for MockFallback {
    type Err = String;

    /// `hash`, or `constant:<text>`, or bare text used as a constant.
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hash" => Ok(MockFallback::HashPick),
            "" => Err("empty mock fallback".into()),
            _ => Ok(MockFallback::Constant(
                s.strip_prefix("constant:").unwrap_or(s).to_string(),
            )),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    script: HashMap<String, String>,
    fallback: MockFallback,
}

impl MockProvider {
    pub fn new(fallback: MockFallback) -> Self {
        MockProvider {
            script: HashMap::new(),
            fallback,
        }
    }

    /// Script keys may be request hashes or prompt hashes; a request hash
    /// match takes precedence.
    pub fn with_script(mut self, script: impl IntoIterator<Item = (String, String)>) -> Self {
        self.script.extend(script);
        self
    }

    pub fn answer(&self, req: &CompletionRequest) -> String {
        if let Some(text) = self
            .script
            .get(&req.request_hash)
            .or_else(|| self.script.get(&req.prompt_hash))
        {
            return text.clone();
        }
        match &self.fallback {
            MockFallback::Constant(text) => text.clone(),
            MockFallback::HashPick => {
                let nibble = u8::from_str_radix(&req.request_hash[..1], 16).unwrap_or(0);
                format!("答案：{}", ToxicityLabel::ALL[(nibble % 4) as usize])
            }
        }
    }
}

#[async_trait]
impl Provider for MockProvider {
    async fn complete(&self, req: &CompletionRequest) -> Result<ProviderReply, ProviderError> {
        let text = self.answer(req);
        let prompt_chars: usize = req.messages.iter().map(|m| m.content.chars().count()).sum();
        Ok(ProviderReply {
            usage: TokenUsage {
                prompt_tokens: prompt_chars as u64,
                completion_tokens: text.chars().count() as u64,
            },
            text,
            meta: [("provider".to_string(), serde_json::json!("mock"))].into(),
        })
    }
}
