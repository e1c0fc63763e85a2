use async_trait::async_trait;

use crate::error::ProviderError;
use crate::spec::{CompletionRequest, ProviderReply};

/// One attempt at a completion; retries and caching live in the gateway.
#[async_trait]
pub trait Provider: Send + Sync {
    async fn complete(&self, req: &CompletionRequest) -> Result<ProviderReply, ProviderError>;
}
