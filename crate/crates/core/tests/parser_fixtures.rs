use std::path::{Path, PathBuf};

use pic_core::parsing::parse_choice;
use pic_core::ToxicityLabel;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn labeled(dir: &Path) -> Vec<(String, String, Option<ToxicityLabel>)> {
    let mut out = Vec::new();
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    names.sort();
    for txt in names {
        let label = std::fs::read_to_string(txt.with_extension("label")).unwrap();
        let label = match label.trim() {
            "none" => None,
            l => Some(l.parse::<ToxicityLabel>().unwrap()),
        };
        let name = txt.file_name().unwrap().to_string_lossy().into_owned();
        out.push((name, std::fs::read_to_string(&txt).unwrap(), label));
    }
    out
}

#[test]
fn worked_traces_parse_exactly() {
    let traces = labeled(&fixtures().join("worked_traces"));
    assert_eq!(traces.len(), 3);
    for (name, text, gold) in traces {
        assert_eq!(parse_choice(&text).label, gold, "{name}");
    }
}

#[test]
fn labeled_trace_set_accuracy() {
    let traces = labeled(&fixtures().join("traces"));
    assert!(traces.len() >= 60);
    let wrong: Vec<_> = traces
        .iter()
        .filter(|(_, text, gold)| parse_choice(text).label != *gold)
        .map(|(name, _, _)| name.clone())
        .collect();
    let accuracy = 1.0 - wrong.len() as f64 / traces.len() as f64;
    assert!(accuracy >= 0.95, "accuracy {accuracy:.3}, wrong: {wrong:?}");
}
