//! Core of the implicit-toxicity prompting harness: corpus construction,
//! prompt rendering, verdict parsing and accuracy reporting.

pub mod corpus;
pub mod error;
pub mod jsonl;
pub mod label;
pub mod metrics;
pub mod parsing;
pub mod promptkit;
pub mod records;
pub mod template;
pub mod text;

pub use error::{CoreError, Result};
pub use label::ToxicityLabel;
