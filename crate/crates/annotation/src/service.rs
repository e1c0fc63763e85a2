//! The annotation workflow: leasing, label and chain submission, review,
//! export. Every write goes through one mutex and lands in the event log
//! before the published state is swapped; readers only clone an `Arc`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use parking_lot::{Mutex, RwLock};
use pic_core::corpus::{
    resolve_agreement, Agreement, AnnotatedPair, AnnotatorLabel, ContextCommentPair,
    ANNOTATED_SCHEMA,
};
use pic_core::jsonl::{self, FileHeader};
use pic_core::promptkit::{ChainStep, InferenceChainExemplar, CHAIN_STEPS, EXEMPLARS_SCHEMA};
use pic_core::ToxicityLabel;
use serde::{Deserialize, Deserializer, Serialize};

use crate::clock::Clock;
use crate::error::{AnnotationError, Result};
use crate::log::{read_all_events, EventLog};
use crate::state::{ChainHistory, ChainVersion, Event, EventRecord, PairState, State, TaskKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub required_annotators: usize,
    pub lease_minutes: i64,
    /// Registered annotators; empty accepts anyone.
    pub annotators: Vec<String>,
    /// Registered reviewers; empty accepts anyone.
    pub reviewers: Vec<String>,
    /// Compact the log after this many events; 0 disables.
    pub snapshot_every: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            required_annotators: 2,
            lease_minutes: 30,
            annotators: Vec::new(),
            reviewers: Vec::new(),
            snapshot_every: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementStatus {
    AwaitingPeer,
    Full,
    Disagree,
}

/// A leased unit of work. Other annotators' labels are never included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub pair: ContextCommentPair,
    pub kind: TaskKind,
    pub assigned_to: String,
    pub state: PairState,
    pub lease_expires_at: DateTime<Utc>,
    /// Agreed label, for chain and review tasks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreed_label: Option<ToxicityLabel>,
    /// Latest chain version, for review tasks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainVersion>,
}

/// Accepts a step as a plain string or as a list of layered entries.
fn lenient_steps<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<ChainStep>>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum StepInput {
        One(String),
        Many(Vec<String>),
    }
    let raw: Option<Vec<StepInput>> = Option::deserialize(d)?;
    Ok(raw.map(|steps| {
        steps
            .into_iter()
            .map(|s| match s {
                StepInput::One(t) => ChainStep::single(t),
                StepInput::Many(v) => ChainStep(v),
            })
            .collect()
    }))
}

fn lenient_edits<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, ChainStep>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum StepInput {
        One(String),
        Many(Vec<String>),
    }
    let raw: BTreeMap<usize, StepInput> = BTreeMap::deserialize(d)?;
    Ok(raw
        .into_iter()
        .map(|(k, s)| {
            let step = match s {
                StepInput::One(t) => ChainStep::single(t),
                StepInput::Many(v) => ChainStep(v),
            };
            (k, step)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSubmission {
    pub pair_id: String,
    pub annotator: String,
    pub label: ToxicityLabel,
    #[serde(default, deserialize_with = "lenient_steps")]
    pub chain: Option<Vec<ChainStep>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub status: AgreementStatus,
    /// True when the submission repeated one already stored.
    pub duplicate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain_version: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewEdit {
    pub pair_id: String,
    pub reviewer: String,
    /// Version the edit was made against; omitted means "current".
    #[serde(default)]
    pub base_version: Option<u32>,
    /// 1-based step index → new text.
    #[serde(default, deserialize_with = "lenient_edits")]
    pub edited_steps: BTreeMap<usize, ChainStep>,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewOutcome {
    pub version: u32,
    pub noop: bool,
    pub edited: Vec<usize>,
    pub exemplar: InferenceChainExemplar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportKind {
    Pairs,
    Exemplars,
}

impl std::str::FromStr for ExportKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pairs" => Ok(ExportKind::Pairs),
            "exemplars" => Ok(ExportKind::Exemplars),
            other => Err(format!("unknown export kind {other:?}")),
        }
    }
}

/// Public view of one pair. Labels stay hidden until all are in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairView {
    pub pair: ContextCommentPair,
    pub state: PairState,
    pub labels_received: usize,
    pub labels_required: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<AnnotatedPair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainHistory>,
}

struct Writer {
    log: EventLog,
    state: State,
}

pub struct AnnotationService {
    cfg: ServiceConfig,
    clock: Arc<dyn Clock>,
    pairs: Vec<ContextCommentPair>,
    index: HashMap<String, usize>,
    writer: Mutex<Writer>,
    published: RwLock<Arc<State>>,
}

impl AnnotationService {
    /// Open the store in `data_dir` over `pairs`, served in the given order.
    pub fn open(
        data_dir: &Path,
        pairs: Vec<ContextCommentPair>,
        cfg: ServiceConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        if cfg.required_annotators == 0 {
            return Err(AnnotationError::Invalid(
                "required_annotators must be at least 1".into(),
            ));
        }
        if cfg.lease_minutes <= 0 {
            return Err(AnnotationError::Invalid("lease_minutes must be positive".into()));
        }
        let mut index = HashMap::new();
        for (i, p) in pairs.iter().enumerate() {
            p.verify_id()?;
            if index.insert(p.pair_id.clone(), i).is_some() {
                return Err(AnnotationError::Invalid(format!(
                    "pair {} listed twice",
                    p.pair_id
                )));
            }
        }
        let (log, state) = EventLog::open(data_dir)?;
        let published = RwLock::new(Arc::new(state.clone()));
        Ok(AnnotationService {
            cfg,
            clock,
            pairs,
            index,
            writer: Mutex::new(Writer { log, state }),
            published,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn pairs(&self) -> &[ContextCommentPair] {
        &self.pairs
    }

    /// Current state; cheap, never blocks on writers.
    pub fn state(&self) -> Arc<State> {
        self.published.read().clone()
    }

    /// Rebuild state from every event on disk, ignoring snapshots.
    pub fn replay(data_dir: &Path) -> Result<State> {
        Ok(State::replay(&read_all_events(data_dir)?))
    }

    fn pair(&self, pair_id: &str) -> Result<&ContextCommentPair> {
        self.index
            .get(pair_id)
            .map(|&i| &self.pairs[i])
            .ok_or_else(|| AnnotationError::UnknownPair(pair_id.to_string()))
    }

    fn check_annotator(&self, who: &str) -> Result<()> {
        if who.trim().is_empty()
            || !(self.cfg.annotators.is_empty() || self.cfg.annotators.iter().any(|a| a == who))
        {
            return Err(AnnotationError::UnknownAnnotator(who.to_string()));
        }
        Ok(())
    }

    fn check_reviewer(&self, who: &str) -> Result<()> {
        if who.trim().is_empty()
            || !(self.cfg.reviewers.is_empty() || self.cfg.reviewers.iter().any(|r| r == who))
        {
            return Err(AnnotationError::UnknownAnnotator(who.to_string()));
        }
        Ok(())
    }

    fn append(&self, w: &mut Writer, events: Vec<Event>) -> Result<()> {
        let at = self.clock.now();
        for event in events {
            let rec = EventRecord {
                seq: w.state.last_seq + 1,
                at,
                event,
            };
            w.log.append(&rec)?;
            w.state.apply(&rec);
            if self.cfg.snapshot_every > 0 && rec.seq % self.cfg.snapshot_every == 0 {
                w.log.compact(&w.state)?;
            }
        }
        *self.published.write() = Arc::new(w.state.clone());
        Ok(())
    }

    fn agreed(&self, state: &State, pair_id: &str) -> Option<AnnotatedPair> {
        let labels = state.labels_of(pair_id);
        if labels.len() < self.cfg.required_annotators {
            return None;
        }
        let labels = labels
            .iter()
            .take(self.cfg.required_annotators)
            .map(|l| AnnotatorLabel {
                annotator: l.annotator.clone(),
                label: l.label,
            })
            .collect();
        resolve_agreement(self.pair(pair_id).ok()?.clone(), labels, self.cfg.required_annotators)
            .ok()
    }

    fn status(&self, state: &State, pair_id: &str) -> AgreementStatus {
        match self.agreed(state, pair_id) {
            None => AgreementStatus::AwaitingPeer,
            Some(a) if a.agreement == Agreement::Full => AgreementStatus::Full,
            Some(_) => AgreementStatus::Disagree,
        }
    }

    /// The agreed toxic label, if the pair may carry a chain.
    fn chain_label(&self, state: &State, pair_id: &str) -> Option<ToxicityLabel> {
        self.agreed(state, pair_id)
            .and_then(|a| a.final_label)
            .filter(|l| l.is_toxic())
    }

    fn eligible(&self, state: &State, pair_id: &str, who: &str, kind: TaskKind, now: DateTime<Utc>) -> bool {
        let others_leasing = state
            .active_leases(pair_id, kind, now)
            .into_iter()
            .filter(|l| l.annotator != who)
            .count();
        match kind {
            TaskKind::Label => {
                let labels = state.labels_of(pair_id);
                labels.iter().all(|l| l.annotator != who)
                    && labels.len() + others_leasing < self.cfg.required_annotators
            }
            TaskKind::Chain => {
                !state.chains.contains_key(pair_id)
                    && state.label_by(pair_id, who).is_some()
                    && self.chain_label(state, pair_id).is_some()
                    && others_leasing == 0
            }
            TaskKind::Review => {
                state.pair_state(pair_id, self.cfg.required_annotators) == PairState::ChainDone
                    && !self.is_involved(state, pair_id, who)
                    && others_leasing == 0
            }
        }
    }

    fn is_involved(&self, state: &State, pair_id: &str, who: &str) -> bool {
        state.label_by(pair_id, who).is_some()
            || state.chains.get(pair_id).is_some_and(|c| c.author == who)
    }

    fn task(&self, state: &State, pair_id: &str, who: &str, kind: TaskKind, expires: DateTime<Utc>) -> AnnotationTask {
        let needs_label = kind != TaskKind::Label;
        AnnotationTask {
            pair: self.pair(pair_id).expect("known pair").clone(),
            kind,
            assigned_to: who.to_string(),
            state: state.pair_state(pair_id, self.cfg.required_annotators),
            lease_expires_at: expires,
            agreed_label: needs_label.then(|| self.chain_label(state, pair_id)).flatten(),
            chain: (kind == TaskKind::Review)
                .then(|| state.chains.get(pair_id).map(|c| c.latest().clone()))
                .flatten(),
        }
    }

    /// Lease the next piece of work for `who`, or `None` when nothing is
    /// available. A still-valid lease is returned again rather than a new one.
    pub fn next_task(&self, who: &str, kind: TaskKind) -> Result<Option<AnnotationTask>> {
        match kind {
            TaskKind::Review => self.check_reviewer(who)?,
            _ => self.check_annotator(who)?,
        }
        let mut w = self.writer.lock();
        let now = self.clock.now();
        for p in &self.pairs {
            let id = p.pair_id.as_str();
            if let Some(lease) = w.state.lease_of(id, who, kind) {
                if lease.expires_at > now && self.eligible(&w.state, id, who, kind, now) {
                    let expires = lease.expires_at;
                    return Ok(Some(self.task(&w.state, id, who, kind, expires)));
                }
            }
        }
        let Some(id) = self
            .pairs
            .iter()
            .map(|p| p.pair_id.as_str())
            .find(|id| self.eligible(&w.state, id, who, kind, now))
        else {
            return Ok(None);
        };
        let expires_at = now + Duration::minutes(self.cfg.lease_minutes);
        self.append(
            &mut w,
            vec![Event::LeaseGranted {
                pair_id: id.to_string(),
                annotator: who.to_string(),
                kind,
                expires_at,
            }],
        )?;
        Ok(Some(self.task(&w.state, id, who, kind, expires_at)))
    }

    fn require_lease(&self, state: &State, pair_id: &str, who: &str, kind: TaskKind) -> Result<()> {
        match state.lease_of(pair_id, who, kind) {
            None => Err(AnnotationError::NoLease {
                pair_id: pair_id.to_string(),
                annotator: who.to_string(),
            }),
            Some(l) if l.expires_at <= self.clock.now() => Err(AnnotationError::LeaseExpired {
                pair_id: pair_id.to_string(),
                annotator: who.to_string(),
            }),
            Some(_) => Ok(()),
        }
    }

    fn check_chain(&self, pair_id: &str, steps: &[ChainStep]) -> Result<()> {
        let missing: Vec<String> = (0..CHAIN_STEPS)
            .filter(|&i| !steps.get(i).is_some_and(ChainStep::is_present))
            .map(|i| (i + 1).to_string())
            .collect();
        if steps.len() != CHAIN_STEPS || !missing.is_empty() {
            return Err(AnnotationError::IncompleteChain(format!(
                "pair {pair_id}: got {} steps, missing {}",
                steps.len(),
                if missing.is_empty() { "none".into() } else { missing.join(",") }
            )));
        }
        Ok(())
    }

    /// Store a label, optionally with a chain. Label and chain are written
    /// together or not at all.
    pub fn submit(&self, sub: &AnnotationSubmission) -> Result<SubmitOutcome> {
        self.check_annotator(&sub.annotator)?;
        let pair_id = sub.pair_id.as_str();
        self.pair(pair_id)?;
        let mut w = self.writer.lock();
        let mut events = Vec::new();

        match w.state.label_by(pair_id, &sub.annotator) {
            Some(prev) if prev != sub.label => {
                return Err(AnnotationError::LabelConflict {
                    pair_id: pair_id.to_string(),
                    annotator: sub.annotator.clone(),
                })
            }
            Some(_) => {}
            None => {
                if w.state.labels_of(pair_id).len() >= self.cfg.required_annotators {
                    return Err(AnnotationError::PairComplete(pair_id.to_string()));
                }
                self.require_lease(&w.state, pair_id, &sub.annotator, TaskKind::Label)?;
                events.push(Event::LabelSubmitted {
                    pair_id: pair_id.to_string(),
                    annotator: sub.annotator.clone(),
                    label: sub.label,
                });
            }
        }

        // Evaluate the chain against the state this label would produce.
        let mut projected = w.state.clone();
        for e in &events {
            projected.apply(&EventRecord {
                seq: projected.last_seq + 1,
                at: self.clock.now(),
                event: e.clone(),
            });
        }
        let mut chain_version = None;
        if let Some(steps) = &sub.chain {
            if self.chain_label(&projected, pair_id).is_none() {
                return Err(AnnotationError::ChainNotAllowed(pair_id.to_string()));
            }
            match projected.chains.get(pair_id) {
                Some(c) if c.author == sub.annotator && c.original().steps == *steps => {}
                Some(_) => return Err(AnnotationError::ChainExists(pair_id.to_string())),
                None => {
                    self.check_chain(pair_id, steps)?;
                    events.push(Event::ChainSubmitted {
                        pair_id: pair_id.to_string(),
                        annotator: sub.annotator.clone(),
                        steps: steps.clone(),
                    });
                }
            }
            chain_version = Some(1);
        }

        let duplicate = events.is_empty();
        if !duplicate {
            self.append(&mut w, events)?;
        }
        if let Some(c) = w.state.chains.get(pair_id) {
            chain_version = chain_version.map(|_| c.latest().version);
        }
        Ok(SubmitOutcome {
            status: self.status(&w.state, pair_id),
            duplicate,
            chain_version,
        })
    }

    fn exemplar(&self, state: &State, pair_id: &str, version: &ChainVersion) -> Option<InferenceChainExemplar> {
        let pair = self.pair(pair_id).ok()?;
        let chain = state.chains.get(pair_id)?;
        Some(InferenceChainExemplar {
            pair_id: pair.pair_id.clone(),
            context: pair.context.clone(),
            comment: pair.comment.clone(),
            steps: version.steps.clone(),
            final_answer: self.chain_label(state, pair_id)?,
            author: chain.author.clone(),
        })
    }

    /// Save a reviewed version of a chain. Earlier versions are kept.
    pub fn review(&self, edit: &ReviewEdit) -> Result<ReviewOutcome> {
        self.check_reviewer(&edit.reviewer)?;
        let pair_id = edit.pair_id.as_str();
        self.pair(pair_id)?;
        let mut w = self.writer.lock();
        let Some(chain) = w.state.chains.get(pair_id) else {
            return Err(AnnotationError::NoChain(pair_id.to_string()));
        };
        if self.is_involved(&w.state, pair_id, &edit.reviewer) {
            return Err(AnnotationError::ReviewerIsAnnotator {
                pair_id: pair_id.to_string(),
                reviewer: edit.reviewer.clone(),
            });
        }
        let current = chain.latest();
        let base = edit.base_version.unwrap_or(current.version);
        if base != current.version {
            return Err(AnnotationError::VersionConflict {
                pair_id: pair_id.to_string(),
                base,
                current: current.version,
            });
        }
        let mut steps = current.steps.clone();
        let mut edited = Vec::new();
        for (&idx, text) in &edit.edited_steps {
            if !(1..=CHAIN_STEPS).contains(&idx) {
                return Err(AnnotationError::Invalid(format!(
                    "step index {idx} is outside 1..=6"
                )));
            }
            if !text.is_present() {
                return Err(AnnotationError::IncompleteChain(format!(
                    "pair {pair_id}: step {idx} would become empty"
                )));
            }
            if steps[idx - 1] != *text {
                steps[idx - 1] = text.clone();
                edited.push(idx);
            }
        }
        let noop = edited.is_empty();
        self.append(
            &mut w,
            vec![Event::ReviewSaved {
                pair_id: pair_id.to_string(),
                reviewer: edit.reviewer.clone(),
                base_version: base,
                steps,
                edited: edited.clone(),
                note: edit.note.clone(),
                noop,
            }],
        )?;
        let latest = w.state.chains[pair_id].latest().clone();
        let exemplar = self
            .exemplar(&w.state, pair_id, &latest)
            .expect("a chained pair has an agreed toxic label");
        Ok(ReviewOutcome {
            version: latest.version,
            noop,
            edited,
            exemplar,
        })
    }

    pub fn pair_view(&self, pair_id: &str) -> Result<PairView> {
        let pair = self.pair(pair_id)?.clone();
        let state = self.state();
        let received = state.labels_of(pair_id).len();
        Ok(PairView {
            state: state.pair_state(pair_id, self.cfg.required_annotators),
            labels_received: received,
            labels_required: self.cfg.required_annotators,
            agreement: self.agreed(&state, pair_id),
            chain: state.chains.get(pair_id).cloned(),
            pair,
        })
    }

    /// Deterministic JSONL export in pair order. `state` restricts output to
    /// pairs currently in that workflow state.
    pub fn export(&self, kind: ExportKind, state_filter: Option<PairState>) -> Vec<u8> {
        let state = self.state();
        let ids = self.pairs.iter().map(|p| p.pair_id.as_str()).filter(|id| {
            state_filter.is_none_or(|f| state.pair_state(id, self.cfg.required_annotators) == f)
        });
        match kind {
            ExportKind::Pairs => {
                let records: Vec<AnnotatedPair> =
                    ids.filter_map(|id| self.agreed(&state, id)).collect();
                jsonl::to_bytes(Some(&FileHeader::new(ANNOTATED_SCHEMA)), &records)
            }
            ExportKind::Exemplars => {
                let records: Vec<InferenceChainExemplar> = ids
                    .filter_map(|id| {
                        let latest = state.chains.get(id)?.latest();
                        self.exemplar(&state, id, latest)
                    })
                    .collect();
                jsonl::to_bytes(Some(&FileHeader::new(EXEMPLARS_SCHEMA)), &records)
            }
        }
    }

    /// Write both export files into `dir`.
    pub fn export_to(&self, dir: &Path, state_filter: Option<PairState>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| AnnotationError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for (kind, name) in [
            (ExportKind::Pairs, "annotated_pairs.jsonl"),
            (ExportKind::Exemplars, "exemplars.jsonl"),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, self.export(kind, state_filter))
                .map_err(|source| AnnotationError::Io { path, source })?;
        }
        Ok(())
    }
}
