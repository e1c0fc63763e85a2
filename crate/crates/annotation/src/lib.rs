//! Backend for two-annotator labelling, chain authoring and review.
//!
//! All writes are events in an append-only log; [`state::State`] is a fold
//! over them, so the store can always be rebuilt from disk.

pub mod clock;
pub mod error;
pub mod http;
pub mod log;
pub mod service;
pub mod state;

pub use clock::{Clock, ManualClock, SystemClock};
pub use error::{AnnotationError, Result};
pub use service::{
    AgreementStatus, AnnotationService, AnnotationSubmission, AnnotationTask, ExportKind,
    ReviewEdit, ReviewOutcome, ServiceConfig, SubmitOutcome,
};
pub use state::{PairState, State, TaskKind};
