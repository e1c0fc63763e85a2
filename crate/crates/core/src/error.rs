use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid toxicity label {0:?}, expected one of A, B, C, D")]
    InvalidLabel(String),

    #[error("failed to read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("pair {pair_id} has {found} annotator label(s), expected {expected}")]
    MissingSecondAnnotator {
        pair_id: String,
        found: usize,
        expected: usize,
    },

    #[error("pair {0} has no agreed final label")]
    MissingFinalLabel(String),

    #[error("pair_id {recorded} does not match the content hash {computed}")]
    PairIdMismatch { recorded: String, computed: String },

    #[error("cannot sample {requested} pairs from a corpus of {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("unknown corpus selector {0:?}")]
    InvalidSelector(String),

    #[error("template references unbound placeholder {{{0}}}")]
    UnboundPlaceholder(String),

    #[error("template has an unterminated placeholder at byte {0}")]
    UnterminatedPlaceholder(usize),

    #[error("template file {path} is missing")]
    MissingTemplate { path: PathBuf },

    #[error("method {method} needs {needed} exemplar(s), {available} available")]
    InsufficientExemplars {
        method: String,
        needed: usize,
        available: usize,
    },

    #[error("ablation step count {0} is outside 1..=6")]
    InvalidAblationStep(usize),

    #[error("exemplar for pair {pair_id} is invalid: {reason}")]
    InvalidExemplar { pair_id: String, reason: String },

    #[error("unknown prompt method {0:?}")]
    InvalidMethod(String),

    #[error("no records to aggregate")]
    EmptyRecords,

    #[error("records mix several (model, method) groups: {0}")]
    MixedGroup(String),

    #[error("baseline method {method} missing for model {model}")]
    MissingBaseline { model: String, method: String },

    #[error("duplicate record for pair {pair_id} in group {group}")]
    DuplicateRecord { pair_id: String, group: String },

    #[error("pair {0} not found in records")]
    PairNotFound(String),

    #[error("side-by-side report needs at least two methods, got {0}")]
    NotEnoughMethods(usize),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}
