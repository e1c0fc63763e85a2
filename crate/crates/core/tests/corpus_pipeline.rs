use std::collections::BTreeMap;
use std::path::PathBuf;

use pic_core::corpus::{
    build_pairs, corpus_stats, evaluation_corpus, ingest_raw, load_annotated, FilterConfig,
    KeywordConfig,
};
use pic_core::ToxicityLabel;
use serde::Deserialize;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[derive(Deserialize)]
struct Expected {
    lines: usize,
    accepted: usize,
    rejected_lines: Vec<usize>,
    nonverbal: usize,
    explicit: usize,
    dedup: usize,
    output: usize,
    explicit_terms: BTreeMap<String, usize>,
}

#[test]
fn raw_fixture_removals_match_hand_counts() {
    let root = fixtures();
    let expected: Expected = serde_json::from_str(
        &std::fs::read_to_string(root.join("corpus/raw_small.expected.json")).unwrap(),
    )
    .unwrap();
    let (items, report) =
        ingest_raw(&root.join("corpus/raw_small.jsonl"), &KeywordConfig::bundled()).unwrap();
    assert_eq!(items.len() + report.rejected.len(), expected.lines);
    assert_eq!(items.len(), expected.accepted);
    let rejected: Vec<usize> = report.rejected.iter().map(|d| d.line).collect();
    assert_eq!(rejected, expected.rejected_lines);

    let (pairs, filter) = build_pairs(&items, &FilterConfig::default());
    assert_eq!(filter.input, expected.accepted);
    assert_eq!(filter.nonverbal_count, expected.nonverbal);
    assert_eq!(filter.explicit_count, expected.explicit);
    assert_eq!(filter.dedup_count, expected.dedup);
    assert_eq!(filter.output, expected.output);
    assert_eq!(pairs.len(), expected.output);
    assert_eq!(filter.explicit_terms, expected.explicit_terms);
    assert!(pairs.iter().any(|p| p.comment == "哈哈😂"));

    let (again, second) = build_pairs(&pairs, &FilterConfig::default());
    assert_eq!(again, pairs);
    assert_eq!(second.output, pairs.len());
}

#[test]
fn reference_fixture_reproduces_published_counts() {
    let labeled = load_annotated(&fixtures().join("corpus/reference_stats.jsonl")).unwrap();
    let n_labeled = labeled.len();
    let corpus = evaluation_corpus(labeled);
    let stats = corpus_stats(&corpus, Some(n_labeled)).unwrap();
    assert_eq!(stats.total, 3097);
    assert_eq!(stats.per_label[&ToxicityLabel::NonToxic], 2148);
    assert_eq!(stats.per_label[&ToxicityLabel::WomenTargeted], 682);
    assert_eq!(stats.per_label[&ToxicityLabel::MenTargeted], 193);
    assert_eq!(stats.per_label[&ToxicityLabel::AntiToxic], 74);
    assert_eq!(n_labeled, 4000);
    let printed = stats.to_string();
    for needle in ["3097", "2148", "682", "193", "74"] {
        assert!(printed.contains(needle), "{needle} missing from:\n{printed}");
    }
}
