use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("unknown pair {0}")]
    UnknownPair(String),
    #[error("{0} is not registered for this role")]
    UnknownAnnotator(String),
    #[error("{annotator} holds no lease on pair {pair_id}")]
    NoLease { pair_id: String, annotator: String },
    #[error("the lease of {annotator} on pair {pair_id} has expired")]
    LeaseExpired { pair_id: String, annotator: String },
    #[error("{annotator} already labelled pair {pair_id} differently")]
    LabelConflict { pair_id: String, annotator: String },
    #[error("pair {0} already has all required labels")]
    PairComplete(String),
    #[error("chains are accepted only for pairs agreed as toxic; pair {0} is not")]
    ChainNotAllowed(String),
    #[error("a chain needs six non-empty steps: {0}")]
    IncompleteChain(String),
    #[error("pair {0} already has a chain")]
    ChainExists(String),
    #[error("pair {0} has no chain to review")]
    NoChain(String),
    #[error("{reviewer} annotated pair {pair_id} and cannot review it")]
    ReviewerIsAnnotator { pair_id: String, reviewer: String },
    #[error("pair {pair_id} is at version {current}, the edit was based on version {base}")]
    VersionConflict {
        pair_id: String,
        base: u32,
        current: u32,
    },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("event log {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("event log {path} line {line}: {message}")]
    CorruptLog {
        path: std::path::PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] pic_core::CoreError),
}

impl AnnotationError {
    /// Stable machine-readable code for HTTP clients.
    pub fn code(&self) -> &'static str {
        match self {
            AnnotationError::UnknownPair(_) => "unknown_pair",
            AnnotationError::UnknownAnnotator(_) => "unknown_annotator",
            AnnotationError::NoLease { .. } => "no_lease",
            AnnotationError::LeaseExpired { .. } => "lease_expired",
            AnnotationError::LabelConflict { .. } => "label_conflict",
            AnnotationError::PairComplete(_) => "pair_complete",
            AnnotationError::ChainNotAllowed(_) => "chain_not_allowed",
            AnnotationError::IncompleteChain(_) => "incomplete_chain",
            AnnotationError::ChainExists(_) => "chain_exists",
            AnnotationError::NoChain(_) => "no_chain",
            AnnotationError::ReviewerIsAnnotator { .. } => "reviewer_is_annotator",
            AnnotationError::VersionConflict { .. } => "version_conflict",
            AnnotationError::Invalid(_) => "invalid",
            AnnotationError::Io { .. } | AnnotationError::CorruptLog { .. } => "storage",
            AnnotationError::Core(_) => "invalid",
        }
    }
}

pub type Result<T, E = AnnotationError> = std::result::Result<T, E>;
