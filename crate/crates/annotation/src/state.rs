//! Events and the state they fold into. State is never mutated except by
//! [`State::apply`], so replaying a log always reproduces it.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use pic_core::promptkit::ChainStep;
use pic_core::ToxicityLabel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Label,
    Chain,
    Review,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    LeaseGranted {
        pair_id: String,
        annotator: String,
        kind: TaskKind,
        expires_at: DateTime<Utc>,
    },
    LabelSubmitted {
        pair_id: String,
        annotator: String,
        label: ToxicityLabel,
    },
    ChainSubmitted {
        pair_id: String,
        annotator: String,
        steps: Vec<ChainStep>,
    },
    ReviewSaved {
        pair_id: String,
        reviewer: String,
        base_version: u32,
        /// Full step texts of the new version.
        steps: Vec<ChainStep>,
        edited: Vec<usize>,
        note: String,
        noop: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub annotator: String,
    pub label: ToxicityLabel,
    pub seq: u64,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lease {
    pub annotator: String,
    pub kind: TaskKind,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainVersion {
    pub version: u32,
    pub steps: Vec<ChainStep>,
    /// Author for version 1, reviewer afterwards.
    pub by: String,
    pub at: DateTime<Utc>,
    #[serde(default)]
    pub edited: Vec<usize>,
    #[serde(default)]
    pub note: String,
    /// True when the review changed nothing.
    #[serde(default)]
    pub noop: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainHistory {
    pub author: String,
    pub versions: Vec<ChainVersion>,
}

impl ChainHistory {
    pub fn latest(&self) -> &ChainVersion {
        self.versions.last().expect("a chain has at least one version")
    }

    pub fn original(&self) -> &ChainVersion {
        &self.versions[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairState {
    Pending,
    Labeled,
    ChainDone,
    Reviewed,
}

impl std::str::FromStr for PairState {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pending" => Ok(PairState::Pending),
            "labeled" | "labelled" => Ok(PairState::Labeled),
            "chain_done" | "chaindone" => Ok(PairState::ChainDone),
            "reviewed" => Ok(PairState::Reviewed),
            other => Err(format!("unknown state {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub last_seq: u64,
    /// pair → labels in submission order.
    pub labels: BTreeMap<String, Vec<LabelEntry>>,
    /// pair → leases, at most one per (annotator, kind).
    pub leases: BTreeMap<String, Vec<Lease>>,
    pub chains: BTreeMap<String, ChainHistory>,
}

impl State {
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a EventRecord>) -> State {
        let mut state = State::default();
        for e in events {
            state.apply(e);
        }
        state
    }

    pub fn apply(&mut self, rec: &EventRecord) {
        self.last_seq = rec.seq;
        match &rec.event {
            Event::LeaseGranted {
                pair_id,
                annotator,
                kind,
                expires_at,
            } => {
                let leases = self.leases.entry(pair_id.clone()).or_default();
                leases.retain(|l| !(l.annotator == *annotator && l.kind == *kind));
                leases.push(Lease {
                    annotator: annotator.clone(),
                    kind: *kind,
                    expires_at: *expires_at,
                });
            }
            Event::LabelSubmitted {
                pair_id,
                annotator,
                label,
            } => {
                self.release(pair_id, annotator, TaskKind::Label);
                self.labels.entry(pair_id.clone()).or_default().push(LabelEntry {
                    annotator: annotator.clone(),
                    label: *label,
                    seq: rec.seq,
                    at: rec.at,
                });
            }
            Event::ChainSubmitted {
                pair_id,
                annotator,
                steps,
            } => {
                self.release(pair_id, annotator, TaskKind::Chain);
                self.chains.insert(
                    pair_id.clone(),
                    ChainHistory {
                        author: annotator.clone(),
                        versions: vec![ChainVersion {
                            version: 1,
                            steps: steps.clone(),
                            by: annotator.clone(),
                            at: rec.at,
                            edited: Vec::new(),
                            note: String::new(),
                            noop: false,
                        }],
                    },
                );
            }
            Event::ReviewSaved {
                pair_id,
                reviewer,
                base_version,
                steps,
                edited,
                note,
                noop,
            } => {
                self.release(pair_id, reviewer, TaskKind::Review);
                if let Some(chain) = self.chains.get_mut(pair_id) {
                    chain.versions.push(ChainVersion {
                        version: base_version + 1,
                        steps: steps.clone(),
                        by: reviewer.clone(),
                        at: rec.at,
                        edited: edited.clone(),
                        note: note.clone(),
                        noop: *noop,
                    });
                }
            }
        }
    }

    fn release(&mut self, pair_id: &str, annotator: &str, kind: TaskKind) {
        if let Some(leases) = self.leases.get_mut(pair_id) {
            leases.retain(|l| !(l.annotator == annotator && l.kind == kind));
            if leases.is_empty() {
                self.leases.remove(pair_id);
            }
        }
    }

    pub fn labels_of(&self, pair_id: &str) -> &[LabelEntry] {
        self.labels.get(pair_id).map_or(&[], Vec::as_slice)
    }

    pub fn label_by(&self, pair_id: &str, annotator: &str) -> Option<ToxicityLabel> {
        self.labels_of(pair_id)
            .iter()
            .find(|l| l.annotator == annotator)
            .map(|l| l.label)
    }

    pub fn active_leases(&self, pair_id: &str, kind: TaskKind, now: DateTime<Utc>) -> Vec<&Lease> {
        self.leases
            .get(pair_id)
            .into_iter()
            .flatten()
            .filter(|l| l.kind == kind && l.expires_at > now)
            .collect()
    }

    pub fn lease_of(&self, pair_id: &str, annotator: &str, kind: TaskKind) -> Option<&Lease> {
        self.leases
            .get(pair_id)
            .into_iter()
            .flatten()
            .find(|l| l.annotator == annotator && l.kind == kind)
    }

    pub fn pair_state(&self, pair_id: &str, required: usize) -> PairState {
        match self.chains.get(pair_id) {
            Some(c) if c.versions.len() > 1 => PairState::Reviewed,
            Some(_) => PairState::ChainDone,
            None if self.labels_of(pair_id).len() >= required => PairState::Labeled,
            None => PairState::Pending,
        }
    }
}
