use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Duration;
use pic_annotation::log::{EVENTS_FILE, SEGMENTS_DIR};
use pic_annotation::{
    AgreementStatus, AnnotationError, AnnotationService, AnnotationSubmission, ExportKind,
    ManualClock, PairState, ReviewEdit, ServiceConfig, TaskKind,
};
use pic_core::corpus::{load_annotated, AnnotatedPair, ContextCommentPair};
use pic_core::promptkit::{load_exemplars, ChainStep};
use pic_core::ToxicityLabel;

fn fixture() -> Vec<AnnotatedPair> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus/synthetic_100.jsonl");
    load_annotated(&path).unwrap()
}

fn pick(idx: &[usize]) -> (Vec<ContextCommentPair>, Vec<ToxicityLabel>) {
    let all = fixture();
    idx.iter()
        .map(|&i| (all[i].pair.clone(), all[i].final_label.unwrap()))
        .unzip()
}

fn pairs(n: usize) -> (Vec<ContextCommentPair>, Vec<ToxicityLabel>) {
    pick(&(0..n).collect::<Vec<_>>())
}

struct Setup {
    _dir: tempfile::TempDir,
    path: PathBuf,
    clock: Arc<ManualClock>,
    svc: AnnotationService,
    gold: Vec<ToxicityLabel>,
    ids: Vec<String>,
}

fn setup(n: usize, cfg: ServiceConfig) -> Setup {
    setup_pick(&(0..n).collect::<Vec<_>>(), cfg)
}

/// A store over the chosen fixture pairs, served in the given order.
fn setup_pick(idx: &[usize], cfg: ServiceConfig) -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store");
    let clock = Arc::new(ManualClock::default());
    let (ps, gold) = pick(idx);
    let ids = ps.iter().map(|p| p.pair_id.clone()).collect();
    let svc = AnnotationService::open(&path, ps, cfg, clock.clone()).unwrap();
    Setup {
        _dir: dir,
        path,
        clock,
        svc,
        gold,
        ids,
    }
}

fn chain(tag: &str) -> Vec<ChainStep> {
    (1..=6).map(|i| ChainStep::single(format!("{tag} step {i}"))).collect()
}

fn sub(pair_id: &str, who: &str, label: ToxicityLabel) -> AnnotationSubmission {
    AnnotationSubmission {
        pair_id: pair_id.to_string(),
        annotator: who.to_string(),
        label,
        chain: None,
    }
}

/// Lease then submit; returns the agreement status.
fn label(s: &Setup, who: &str, pair: usize, label: ToxicityLabel) -> AgreementStatus {
    let task = s.svc.next_task(who, TaskKind::Label).unwrap().expect("task available");
    assert_eq!(task.pair.pair_id, s.ids[pair], "{who} expected pair {pair}");
    s.svc.submit(&sub(&s.ids[pair], who, label)).unwrap().status
}

#[test]
fn fresh_corpus_serves_first_pair_and_repeats_the_active_lease() {
    let s = setup(5, ServiceConfig::default());
    let a = s.svc.next_task("ann1", TaskKind::Label).unwrap().unwrap();
    assert_eq!(a.pair.pair_id, s.ids[0]);
    assert_eq!(a.state, PairState::Pending);
    let again = s.svc.next_task("ann1", TaskKind::Label).unwrap().unwrap();
    assert_eq!(again, a);
    assert_eq!(s.svc.state().last_seq, 1, "re-serving must not grant a second lease");
    // The peer gets the same pair: it still needs a second label.
    let b = s.svc.next_task("ann2", TaskKind::Label).unwrap().unwrap();
    assert_eq!(b.pair.pair_id, s.ids[0]);
    // A third annotator cannot take it while both slots are leased.
    let c = s.svc.next_task("ann3", TaskKind::Label).unwrap().unwrap();
    assert_eq!(c.pair.pair_id, s.ids[1]);
}

#[test]
fn annotator_with_everything_labelled_gets_none() {
    let s = setup(3, ServiceConfig::default());
    for i in 0..3 {
        assert_eq!(label(&s, "ann1", i, s.gold[i]), AgreementStatus::AwaitingPeer);
    }
    assert!(s.svc.next_task("ann1", TaskKind::Label).unwrap().is_none());
    assert!(s.svc.next_task("ann2", TaskKind::Label).unwrap().is_some());
}

#[test]
fn expired_lease_makes_the_pair_servable_again() {
    let cfg = ServiceConfig {
        required_annotators: 1,
        ..ServiceConfig::default()
    };
    let s = setup(3, cfg);
    let a = s.svc.next_task("ann1", TaskKind::Label).unwrap().unwrap();
    assert_eq!(a.pair.pair_id, s.ids[0]);
    let b = s.svc.next_task("ann2", TaskKind::Label).unwrap().unwrap();
    assert_eq!(b.pair.pair_id, s.ids[1]);
    s.clock.advance(Duration::minutes(29));
    let c = s.svc.next_task("ann3", TaskKind::Label).unwrap().unwrap();
    assert_eq!(c.pair.pair_id, s.ids[2]);
    s.clock.advance(Duration::minutes(2));
    let err = s.svc.submit(&sub(&s.ids[0], "ann1", s.gold[0])).unwrap_err();
    assert!(matches!(err, AnnotationError::LeaseExpired { .. }), "{err}");
    let d = s.svc.next_task("ann4", TaskKind::Label).unwrap().unwrap();
    assert_eq!(d.pair.pair_id, s.ids[0]);
}

#[test]
fn submission_requires_a_lease_and_registered_annotator() {
    let cfg = ServiceConfig {
        annotators: vec!["ann1".into(), "ann2".into()],
        ..ServiceConfig::default()
    };
    let s = setup(2, cfg);
    let err = s.svc.submit(&sub(&s.ids[0], "ann1", s.gold[0])).unwrap_err();
    assert_eq!(err.code(), "no_lease");
    let err = s.svc.next_task("mallory", TaskKind::Label).unwrap_err();
    assert_eq!(err.code(), "unknown_annotator");
    let err = s.svc.submit(&sub("nope", "ann1", ToxicityLabel::NonToxic)).unwrap_err();
    assert_eq!(err.code(), "unknown_pair");
}

#[test]
fn agreement_outcomes() {
    let s = setup(3, ServiceConfig::default());
    assert_eq!(label(&s, "ann1", 0, ToxicityLabel::NonToxic), AgreementStatus::AwaitingPeer);
    assert_eq!(label(&s, "ann2", 0, ToxicityLabel::NonToxic), AgreementStatus::Full);
    assert_eq!(label(&s, "ann1", 1, ToxicityLabel::WomenTargeted), AgreementStatus::AwaitingPeer);
    assert_eq!(label(&s, "ann2", 1, ToxicityLabel::AntiToxic), AgreementStatus::Disagree);
    let err = s.svc.submit(&sub(&s.ids[0], "ann3", ToxicityLabel::NonToxic)).unwrap_err();
    assert_eq!(err.code(), "pair_complete");
    let err = s.svc.submit(&sub(&s.ids[0], "ann1", ToxicityLabel::MenTargeted)).unwrap_err();
    assert_eq!(err.code(), "label_conflict");
    let dup = s.svc.submit(&sub(&s.ids[0], "ann1", ToxicityLabel::NonToxic)).unwrap();
    assert!(dup.duplicate);
    assert_eq!(dup.status, AgreementStatus::Full);

    let exported = String::from_utf8(s.svc.export(ExportKind::Pairs, None)).unwrap();
    assert_eq!(exported.lines().count(), 3, "header plus two complete pairs");
    assert!(exported.contains("\"Disagree\""));
}

#[test]
fn chain_is_rejected_on_non_toxic_or_disagreed_pairs() {
    let s = setup(3, ServiceConfig::default());
    label(&s, "ann1", 0, ToxicityLabel::NonToxic);
    s.svc.next_task("ann2", TaskKind::Label).unwrap();
    let mut second = sub(&s.ids[0], "ann2", ToxicityLabel::NonToxic);
    second.chain = Some(chain("x"));
    let before = s.svc.state().last_seq;
    let err = s.svc.submit(&second).unwrap_err();
    assert_eq!(err.code(), "chain_not_allowed");
    assert_eq!(s.svc.state().last_seq, before, "rejected submission writes nothing");

    // First label of a pair: no agreement yet, so no chain either.
    s.svc.next_task("ann3", TaskKind::Label).unwrap();
    let mut first = sub(&s.ids[1], "ann3", ToxicityLabel::WomenTargeted);
    first.chain = Some(chain("y"));
    assert_eq!(s.svc.submit(&first).unwrap_err().code(), "chain_not_allowed");
}

#[test]
fn chain_needs_six_present_steps_and_is_atomic_with_the_label() {
    let s = setup_pick(&[1], ServiceConfig::default());
    label(&s, "ann1", 0, ToxicityLabel::WomenTargeted);
    s.svc.next_task("ann2", TaskKind::Label).unwrap();
    let mut second = sub(&s.ids[0], "ann2", ToxicityLabel::WomenTargeted);
    let mut steps = chain("z");
    steps[4] = ChainStep::single("  ");
    second.chain = Some(steps);
    let err = s.svc.submit(&second).unwrap_err();
    assert_eq!(err.code(), "incomplete_chain");
    assert!(err.to_string().contains("missing 5"), "{err}");
    assert!(s.svc.state().label_by(&s.ids[0], "ann2").is_none());

    second.chain = Some(chain("z"));
    let out = s.svc.submit(&second).unwrap();
    assert_eq!(out.status, AgreementStatus::Full);
    assert_eq!(out.chain_version, Some(1));
    assert_eq!(s.svc.pair_view(&s.ids[0]).unwrap().state, PairState::ChainDone);
    // Resending the identical submission is a duplicate, not a new chain.
    let again = s.svc.submit(&second).unwrap();
    assert!(again.duplicate);
}

#[test]
fn chain_task_for_agreed_toxic_pair_without_chain() {
    let s = setup(3, ServiceConfig::default());
    label(&s, "ann1", 0, ToxicityLabel::NonToxic);
    label(&s, "ann2", 0, ToxicityLabel::NonToxic);
    label(&s, "ann1", 1, ToxicityLabel::WomenTargeted);
    label(&s, "ann2", 1, ToxicityLabel::WomenTargeted);
    assert!(s.svc.next_task("ann3", TaskKind::Chain).unwrap().is_none(), "only labellers author");
    let task = s.svc.next_task("ann1", TaskKind::Chain).unwrap().unwrap();
    assert_eq!(task.pair.pair_id, s.ids[1]);
    assert_eq!(task.agreed_label, Some(ToxicityLabel::WomenTargeted));
    assert!(s.svc.next_task("ann2", TaskKind::Chain).unwrap().is_none(), "leased to ann1");
    let mut c = sub(&s.ids[1], "ann1", ToxicityLabel::WomenTargeted);
    c.chain = Some(chain("c"));
    assert_eq!(s.svc.submit(&c).unwrap().chain_version, Some(1));
    assert!(s.svc.next_task("ann1", TaskKind::Chain).unwrap().is_none());
}

fn chained(s: &Setup, pair: usize, l: ToxicityLabel) {
    label(s, "ann1", pair, l);
    s.svc.next_task("ann2", TaskKind::Label).unwrap();
    let mut second = sub(&s.ids[pair], "ann2", l);
    second.chain = Some(chain("orig"));
    s.svc.submit(&second).unwrap();
}

#[test]
fn review_versions_keep_the_original() {
    let s = setup_pick(&[1], ServiceConfig::default());
    chained(&s, 0, ToxicityLabel::WomenTargeted);
    let task = s.svc.next_task("rev", TaskKind::Review).unwrap().unwrap();
    assert_eq!(task.chain.as_ref().unwrap().version, 1);
    let edit = ReviewEdit {
        pair_id: s.ids[0].clone(),
        reviewer: "rev".into(),
        base_version: Some(1),
        edited_steps: [(3, ChainStep::single("better step 3"))].into(),
        note: "clarified cue".into(),
    };
    let out = s.svc.review(&edit).unwrap();
    assert_eq!((out.version, out.noop, out.edited.clone()), (2, false, vec![3]));
    assert_eq!(out.exemplar.steps[2], ChainStep::single("better step 3"));
    assert_eq!(out.exemplar.final_answer, ToxicityLabel::WomenTargeted);
    let view = s.svc.pair_view(&s.ids[0]).unwrap();
    assert_eq!(view.state, PairState::Reviewed);
    let history = view.chain.unwrap();
    assert_eq!(history.original().steps, chain("orig"));
    assert_eq!(history.latest().steps[2], ChainStep::single("better step 3"));

    // Stale base version.
    let err = s.svc.review(&edit).unwrap_err();
    assert!(matches!(err, AnnotationError::VersionConflict { base: 1, current: 2, .. }));
    // Out-of-range step.
    let bad = ReviewEdit {
        base_version: None,
        edited_steps: [(7, ChainStep::single("x"))].into(),
        ..edit.clone()
    };
    assert_eq!(s.svc.review(&bad).unwrap_err().code(), "invalid");
}

#[test]
fn annotators_cannot_review_their_pair() {
    let s = setup_pick(&[1], ServiceConfig::default());
    chained(&s, 0, ToxicityLabel::WomenTargeted);
    for who in ["ann1", "ann2"] {
        assert!(s.svc.next_task(who, TaskKind::Review).unwrap().is_none());
        let err = s
            .svc
            .review(&ReviewEdit {
                pair_id: s.ids[0].clone(),
                reviewer: who.into(),
                base_version: None,
                edited_steps: Default::default(),
                note: String::new(),
            })
            .unwrap_err();
        assert_eq!(err.code(), "reviewer_is_annotator");
    }
}

#[test]
fn noop_review_bumps_version_and_is_flagged() {
    let s = setup_pick(&[1], ServiceConfig::default());
    chained(&s, 0, ToxicityLabel::WomenTargeted);
    let same_text = ReviewEdit {
        pair_id: s.ids[0].clone(),
        reviewer: "rev".into(),
        base_version: Some(1),
        edited_steps: [(2, ChainStep::single("orig step 2"))].into(),
        note: String::new(),
    };
    let out = s.svc.review(&same_text).unwrap();
    assert!(out.noop);
    assert_eq!(out.version, 2);
    assert!(out.edited.is_empty());
    let history = s.svc.pair_view(&s.ids[0]).unwrap().chain.unwrap();
    assert_eq!(history.versions.len(), 2);
    assert_eq!(history.versions[0].steps, history.versions[1].steps);
    assert!(history.latest().noop);
}

#[test]
fn export_filters_and_is_deterministic() {
    let s = setup_pick(&[1, 6, 0], ServiceConfig::default());
    let empty_pairs = s.svc.export(ExportKind::Pairs, None);
    let empty_ex = s.svc.export(ExportKind::Exemplars, None);
    assert_eq!(empty_pairs, b"{\"schema\":\"pic.annotated-pairs\",\"version\":1}\n");
    assert_eq!(empty_ex, b"{\"schema\":\"pic.exemplars\",\"version\":1}\n");

    chained(&s, 0, ToxicityLabel::WomenTargeted);
    chained(&s, 1, ToxicityLabel::MenTargeted);
    s.svc
        .review(&ReviewEdit {
            pair_id: s.ids[1].clone(),
            reviewer: "rev".into(),
            base_version: None,
            edited_steps: [(1, ChainStep::single("edited"))].into(),
            note: String::new(),
        })
        .unwrap();

    let reviewed = String::from_utf8(s.svc.export(ExportKind::Exemplars, Some(PairState::Reviewed))).unwrap();
    let lines: Vec<&str> = reviewed.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].contains(&s.ids[1]));
    assert!(lines[1].contains("edited"));

    let all_a = s.svc.export(ExportKind::Exemplars, None);
    assert_eq!(all_a, s.svc.export(ExportKind::Exemplars, None));
    let dir = tempfile::tempdir().unwrap();
    s.svc.export_to(dir.path(), None).unwrap();
    s.svc.export_to(&dir.path().join("again"), None).unwrap();
    for name in ["annotated_pairs.jsonl", "exemplars.jsonl"] {
        assert_eq!(
            std::fs::read(dir.path().join(name)).unwrap(),
            std::fs::read(dir.path().join("again").join(name)).unwrap()
        );
    }
    // Exported files load through the corpus readers.
    let ex = load_exemplars(&dir.path().join("exemplars.jsonl")).unwrap();
    assert_eq!(ex.len(), 2);
    assert!(ex.iter().all(|e| e.is_complete()));
    let ap = load_annotated(&dir.path().join("annotated_pairs.jsonl")).unwrap();
    assert_eq!(ap.len(), 2);
}

#[test]
fn concurrent_submits_by_different_annotators_both_persist() {
    let s = setup(2, ServiceConfig::default());
    s.svc.next_task("ann1", TaskKind::Label).unwrap();
    s.svc.next_task("ann2", TaskKind::Label).unwrap();
    let (a, b) = std::thread::scope(|scope| {
        let a = scope.spawn(|| s.svc.submit(&sub(&s.ids[0], "ann1", s.gold[0])));
        let b = scope.spawn(|| s.svc.submit(&sub(&s.ids[0], "ann2", s.gold[0])));
        (a.join().unwrap().unwrap(), b.join().unwrap().unwrap())
    });
    let mut statuses = [a.status, b.status];
    statuses.sort_by_key(|s| format!("{s:?}"));
    assert_eq!(statuses, [AgreementStatus::AwaitingPeer, AgreementStatus::Full]);
    assert_eq!(s.svc.state().labels_of(&s.ids[0]).len(), 2);
}

/// A scripted session of exactly 50 events with one lease expiry and one
/// concurrent double-submit, checked against a rebuild from disk.
#[test]
fn replay_of_scripted_session_equals_live_state() {
    let cfg = ServiceConfig {
        snapshot_every: 16,
        ..ServiceConfig::default()
    };
    let s = setup(12, cfg.clone());

    // Pairs 0..=8 labelled by ann1 and ann2 with the gold label: 36 events,
    // plus chains on the toxic ones (1, 6, 7): 3 events.
    for i in 0..9 {
        if i == 4 {
            // Lease expiry: ann2 lets its lease lapse, is refused, re-leases.
            label(&s, "ann1", i, s.gold[i]);
            s.svc.next_task("ann2", TaskKind::Label).unwrap().unwrap();
            s.clock.advance(Duration::minutes(31));
            let err = s.svc.submit(&sub(&s.ids[i], "ann2", s.gold[i])).unwrap_err();
            assert_eq!(err.code(), "lease_expired");
            assert_eq!(label(&s, "ann2", i, s.gold[i]), AgreementStatus::Full);
            continue;
        }
        if i == 5 {
            // Concurrent double-submit of one submission.
            label(&s, "ann1", i, s.gold[i]);
            s.svc.next_task("ann2", TaskKind::Label).unwrap().unwrap();
            let second = sub(&s.ids[i], "ann2", s.gold[i]);
            let outs: Vec<_> = std::thread::scope(|scope| {
                let hs: Vec<_> = (0..2).map(|_| scope.spawn(|| s.svc.submit(&second))).collect();
                hs.into_iter().map(|h| h.join().unwrap().unwrap()).collect()
            });
            assert_eq!(outs.iter().filter(|o| o.duplicate).count(), 1);
            assert!(outs.iter().all(|o| o.status == AgreementStatus::Full));
            continue;
        }
        label(&s, "ann1", i, s.gold[i]);
        s.svc.next_task("ann2", TaskKind::Label).unwrap().unwrap();
        let mut second = sub(&s.ids[i], "ann2", s.gold[i]);
        if s.gold[i].is_toxic() {
            second.chain = Some(chain(&format!("p{i}")));
        }
        s.svc.submit(&second).unwrap();
        s.clock.advance(Duration::seconds(45));
    }
    assert_eq!(s.svc.state().last_seq, 9 * 4 + 1 + 3);

    // Reviews: pair 1 edited, pair 6 edited then a no-op, pair 7 edited.
    for (pair, steps) in [(1, vec![3]), (6, vec![2, 5]), (7, vec![1])] {
        let task = s.svc.next_task("rev", TaskKind::Review).unwrap().unwrap();
        assert_eq!(task.pair.pair_id, s.ids[pair]);
        s.svc
            .review(&ReviewEdit {
                pair_id: s.ids[pair].clone(),
                reviewer: "rev".into(),
                base_version: Some(1),
                edited_steps: steps.iter().map(|&k| (k, ChainStep::single(format!("rev {k}")))).collect(),
                note: format!("pair {pair}"),
            })
            .unwrap();
    }
    let noop = s
        .svc
        .review(&ReviewEdit {
            pair_id: s.ids[6].clone(),
            reviewer: "rev2".into(),
            base_version: Some(2),
            edited_steps: Default::default(),
            note: "approved".into(),
        })
        .unwrap();
    assert!(noop.noop);
    // One first label on a fresh pair, and an open lease on its second slot.
    label(&s, "ann3", 9, s.gold[9]);
    let open = s.svc.next_task("ann4", TaskKind::Label).unwrap().unwrap();
    assert_eq!(open.pair.pair_id, s.ids[9]);

    let live = s.svc.state();
    assert_eq!(live.last_seq, 50);
    assert!(s.path.join(SEGMENTS_DIR).read_dir().unwrap().count() >= 3, "log was compacted");

    let rebuilt = AnnotationService::replay(&s.path).unwrap();
    assert_eq!(rebuilt, *live);

    let events = std::fs::read_to_string(s.path.join(EVENTS_FILE)).unwrap();
    assert!(!events.is_empty());

    let (ps, _) = pairs(12);
    let reopened = AnnotationService::open(&s.path, ps, cfg, s.clock.clone()).unwrap();
    assert_eq!(*reopened.state(), *live);
    assert_eq!(
        reopened.export(ExportKind::Exemplars, None),
        s.svc.export(ExportKind::Exemplars, None)
    );
}

#[test]
fn torn_final_line_is_dropped_on_reopen() {
    let s = setup(3, ServiceConfig::default());
    label(&s, "ann1", 0, s.gold[0]);
    let live = s.svc.state();
    let path = s.path.clone();
    let (ps, _) = pairs(3);
    drop(s.svc);
    let events = path.join(EVENTS_FILE);
    let mut bytes = std::fs::read(&events).unwrap();
    bytes.extend_from_slice(b"{\"seq\":3,\"at\":\"2024-");
    std::fs::write(&events, bytes).unwrap();
    let svc = AnnotationService::open(&path, ps, ServiceConfig::default(), s.clock.clone()).unwrap();
    assert_eq!(*svc.state(), *live);
    svc.next_task("ann2", TaskKind::Label).unwrap().unwrap();
    assert_eq!(AnnotationService::replay(&path).unwrap(), *svc.state());
}

#[test]
fn corrupt_middle_line_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(EVENTS_FILE), "garbage\n").unwrap();
    let (ps, _) = pairs(1);
    let err = AnnotationService::open(dir.path(), ps, ServiceConfig::default(), Arc::new(ManualClock::default()))
        .err()
        .unwrap();
    assert!(matches!(err, AnnotationError::CorruptLog { line: 1, .. }), "{err}");
}
