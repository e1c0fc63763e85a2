use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] pic_core::CoreError),
    #[error(transparent)]
    Gateway(#[from] pic_gateway::GatewayError),
    #[error("pair {0} has no six-step inference chain")]
    MissingChain(String),
    #[error("the selected subset is empty")]
    EmptySubset,
}

pub type Result<T, E = RunError> = std::result::Result<T, E>;
