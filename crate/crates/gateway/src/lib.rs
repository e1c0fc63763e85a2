//! Uniform completion interface over OpenAI-compatible chat APIs, with a
//! content-addressed response cache, retries, rate limiting and a mock
//! provider for offline runs.

pub mod cache;
pub mod clock;
pub mod error;
pub mod gateway;
pub mod limiter;
pub mod mock;
pub mod openai;
pub mod provider;
pub mod spec;

pub use cache::ResponseCache;
pub use clock::{Clock, SystemClock, VirtualClock};
pub use error::{GatewayError, ProviderError};
pub use gateway::{Backoff, Gateway, GatewayBuilder};
pub use mock::{MockFallback, MockProvider};
pub use provider::Provider;
pub use spec::{CompletionRequest, CompletionResponse, ModelSpec, ProviderKind, RateLimit};
