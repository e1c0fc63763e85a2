//! Run records: one (pair, model, method) execution.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::jsonl::{self, FileHeader};
use crate::label::ToxicityLabel;
use crate::parsing::{ChainTrace, ParsedVerdict};
use crate::promptkit::PromptMethod;

pub const RUN_SCHEMA: &str = "pic.run-records";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub pair_id: String,
    pub model_name: String,
    pub method: PromptMethod,
    pub prompt_hash: String,
    pub raw_response: String,
    pub verdict: ParsedVerdict,
    pub gold: ToxicityLabel,
    pub chain: ChainTrace,
    pub usage: TokenUsage,
    pub latency_ms: u64,
    /// RFC 3339 time of the original provider call (replayed from cache).
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    /// Correct only when parsed and equal to gold; errors never count.
    pub fn is_correct(&self) -> bool {
        self.error.is_none() && self.verdict.label == Some(self.gold)
    }

    /// Predicted label as scored: errored records count as unparsed.
    pub fn predicted(&self) -> Option<ToxicityLabel> {
        if self.error.is_some() {
            None
        } else {
            self.verdict.label
        }
    }

    /// Stable output order: pair, then method, then model.
    pub fn sort_key(&self) -> (&str, PromptMethod, &str) {
        (&self.pair_id, self.method, &self.model_name)
    }
}

pub fn run_header(config_hash: &str, code_version: &str) -> FileHeader {
    FileHeader::new(RUN_SCHEMA)
        .with("config_hash", config_hash)
        .with("code_version", code_version)
}

pub fn write_run_records(path: &Path, header: &FileHeader, records: &[RunRecord]) -> Result<()> {
    jsonl::write_records(path, Some(header), records)
}

pub fn read_run_records(path: &Path) -> Result<(Option<FileHeader>, Vec<RunRecord>)> {
    jsonl::read_records(path)
}
