use thiserror::Error;

/// Failure of a single provider attempt.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("rate limited (HTTP 429)")]
    RateLimited,
    #[error("request timed out")]
    Timeout,
    #[error("server error (HTTP {status}): {body}")]
    Server { status: u16, body: String },
    #[error("request rejected (HTTP {status}): {body}")]
    Client { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl ProviderError {
    /// Timeouts, 429, 5xx and connection failures are retried.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            ProviderError::RateLimited
                | ProviderError::Timeout
                | ProviderError::Server { .. }
                | ProviderError::Transport(_)
        )
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("authentication failed for model {model}: {source}")]
    Auth { model: String, source: ProviderError },
    #[error("model {model}: {source}")]
    Rejected { model: String, source: ProviderError },
    #[error("malformed response from model {model}: {message}")]
    MalformedResponse { model: String, message: String },
    #[error("model {model}: gave up after {attempts} attempts, last error: {last}")]
    ExhaustedRetries {
        model: String,
        attempts: u32,
        last: ProviderError,
    },
    #[error("environment variable {0} with the API key is not set")]
    MissingCredential(String),
    #[error("invalid model spec for {model}: {message}")]
    InvalidSpec { model: String, message: String },
    #[error("no provider registered for model {0}")]
    UnknownModel(String),
    #[error("cache I/O at {path}: {source}")]
    Cache {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("HTTP client setup failed: {0}")]
    Client(String),
}

impl GatewayError {
    /// Short, credential-free text stored as a run record's error marker.
    pub fn marker(&self) -> String {
        self.to_string()
    }
}

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;
