//! Shared client handle: cache lookup, rate limiting, retries with
//! exponential backoff, and persistence of successful responses.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crate::cache::ResponseCache;
use crate::clock::{rfc3339, Clock, SystemClock};
use crate::error::{GatewayError, ProviderError, Result};
use crate::limiter::RateLimiter;
use crate::mock::MockProvider;
use crate::openai::OpenAiProvider;
use crate::provider::Provider;
use crate::spec::{CompletionRequest, CompletionResponse, ModelSpec, ProviderKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub base: Duration,
    pub max: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            base: Duration::from_millis(500),
            max: Duration::from_secs(30),
        }
    }
}

impl Backoff {
    /// Delay before retry `n` (0-based): `base * 2^n`, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        self.base
            .checked_mul(1u32.checked_shl(retry).unwrap_or(u32::MAX))
            .map_or(self.max, |d| d.min(self.max))
    }
}

struct Registered {
    provider: Arc<dyn Provider>,
    limiter: Option<RateLimiter>,
}

pub struct Gateway {
    providers: HashMap<String, Registered>,
    cache: Option<ResponseCache>,
    clock: Arc<dyn Clock>,
    backoff: Backoff,
    calls: AtomicU64,
}

pub struct GatewayBuilder {
    providers: Vec<(ModelSpec, Arc<dyn Provider>)>,
    cache: Option<ResponseCache>,
    clock: Arc<dyn Clock>,
    backoff: Backoff,
}

impl GatewayBuilder {
    pub fn cache_dir(mut self, dir: impl Into<std::path::PathBuf>) -> Self {
        self.cache = Some(ResponseCache::new(dir));
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    /// Register an explicit provider for `spec.model_name`.
    pub fn provider(mut self, spec: &ModelSpec, provider: Arc<dyn Provider>) -> Self {
        self.providers.push((spec.clone(), provider));
        self
    }

    /// Register the provider a spec asks for: a mock with the given
    /// behaviour, or an OpenAI-compatible client configured from the
    /// environment.
    pub fn model(self, spec: &ModelSpec, mock: &MockProvider) -> Result<Self> {
        spec.validate()?;
        let provider: Arc<dyn Provider> = match spec.provider {
            ProviderKind::Mock => Arc::new(mock.clone()),
            ProviderKind::OpenaiCompatible => Arc::new(OpenAiProvider::from_spec(spec)?),
        };
        Ok(self.provider(spec, provider))
    }

    pub fn build(self) -> Gateway {
        let clock = self.clock;
        let providers = self
            .providers
            .into_iter()
            .map(|(spec, provider)| {
                let limiter = spec
                    .rate_limit
                    .map(|rl| RateLimiter::new(rl.requests, rl.window(), clock.clone()));
                (spec.model_name, Registered { provider, limiter })
            })
            .collect();
        Gateway {
            providers,
            cache: self.cache,
            clock,
            backoff: self.backoff,
            calls: AtomicU64::new(0),
        }
    }
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder {
            providers: Vec::new(),
            cache: None,
            clock: Arc::new(SystemClock::default()),
            backoff: Backoff::default(),
        }
    }

    /// Provider attempts made so far (cache hits excluded).
    pub fn provider_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub async fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse> {
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&req.request_hash)) {
            return Ok(hit);
        }
        let model = &req.model.model_name;
        let registered = self
            .providers
            .get(model)
            .ok_or_else(|| GatewayError::UnknownModel(model.clone()))?;
        let attempts = req.model.max_retries + 1;
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                self.clock.sleep(self.backoff.delay(attempt - 1)).await;
            }
            if let Some(limiter) = &registered.limiter {
                limiter.acquire().await;
            }
            let started = self.clock.now();
            let timestamp = rfc3339(self.clock.wall());
            self.calls.fetch_add(1, Ordering::SeqCst);
            match registered.provider.complete(req).await {
                Ok(reply) => {
                    let latency = self.clock.now().saturating_sub(started);
                    let resp = CompletionResponse {
                        request_hash: req.request_hash.clone(),
                        model_name: model.clone(),
                        prompt_hash: req.prompt_hash.clone(),
                        text: reply.text,
                        usage: reply.usage,
                        latency_ms: latency.as_millis() as u64,
                        timestamp,
                        provider_meta: reply.meta,
                        from_cache: false,
                    };
                    if let Some(cache) = &self.cache {
                        cache.put(&resp)?;
                    }
                    return Ok(resp);
                }
                Err(e) if e.is_retryable() => {
                    tracing::debug!(model = %model, attempt, error = %e, "retryable provider failure");
                    last = Some(e);
                }
                Err(e) => return Err(fatal(model, e)),
            }
        }
        Err(GatewayError::ExhaustedRetries {
            model: model.clone(),
            attempts,
            last: last.expect("at least one attempt"),
        })
    }
}

fn fatal(model: &str, e: ProviderError) -> GatewayError {
    let model = model.to_string();
    match e {
        ProviderError::Auth(_) => GatewayError::Auth { model, source: e },
        ProviderError::Malformed(message) => GatewayError::MalformedResponse { model, message },
        other => GatewayError::Rejected {
            model,
            source: other,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let b = Backoff::default();
        let delays: Vec<u64> = (0..8).map(|n| b.delay(n).as_millis() as u64).collect();
        assert_eq!(delays, [500, 1000, 2000, 4000, 8000, 16000, 30000, 30000]);
        assert_eq!(b.delay(40), b.max);
    }
}
