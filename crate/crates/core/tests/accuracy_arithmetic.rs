use std::collections::BTreeMap;
use std::path::PathBuf;

use pic_core::metrics::{delta_table, render_report, EvalReport, Percent, ReportFormat};
use pic_core::promptkit::PromptMethod;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn published() -> EvalReport {
    let csv = std::fs::read_to_string(fixtures().join("metrics/published_accuracy.csv")).unwrap();
    EvalReport::from_accuracy_table(&csv).unwrap()
}

const MODELS: [&str; 3] = ["GPT-4o", "Llama-3.1", "DeepSeek-v2.5"];

fn deltas(report: &EvalReport, method: PromptMethod, baseline: PromptMethod) -> Vec<String> {
    let d = delta_table(report, baseline).unwrap();
    MODELS
        .iter()
        .map(|m| d.get(m, method).unwrap().signed())
        .collect()
}

#[test]
fn published_deltas_are_reproduced() {
    let r = published();
    use PromptMethod::*;
    assert_eq!(
        deltas(&r, PicStepInstructions, ZeroShot),
        ["+12.26", "+13.79", "+19.91"]
    );
    assert_eq!(deltas(&r, CoT, ZeroShot), ["-5.49", "-8.03", "+6.64"]);
    assert_eq!(deltas(&r, PicOneShot, ZeroShot), ["+5.61", "-3.77", "+10.03"]);
    assert_eq!(
        deltas(&r, PicStepsPlusShots(3), PicStepInstructions),
        ["-2.00", "-14.98", "+6.13"]
    );
}

#[test]
fn averages_match_published_column() {
    let r = published();
    let expected: BTreeMap<String, String> = serde_json::from_str(
        &std::fs::read_to_string(fixtures().join("metrics/published_averages.json")).unwrap(),
    )
    .unwrap();
    for (method, avg) in expected {
        let m: PromptMethod = method.parse().unwrap();
        let row: Vec<Percent> = MODELS.iter().map(|x| r.accuracy_of(x, m).unwrap()).collect();
        assert_eq!(Percent::mean(&row).unwrap().to_string(), avg, "{method}");
    }
}

#[test]
fn report_bolds_column_maxima() {
    let r = published();
    let d = delta_table(&r, PromptMethod::ZeroShot).unwrap();
    let md = render_report(&r, &[d.clone()], ReportFormat::Markdown);
    for bold in ["**76.21**", "**68.82**", "**71.01**", "**69.97**"] {
        assert!(md.contains(bold), "{bold} not bold in\n{md}");
    }
    assert_eq!(md.matches("**").count(), 8);
    assert!(md.contains("| PIC step instructions | **76.21** | **68.82** | 64.88 | **69.97** |"));
    assert_eq!(md, render_report(&r, &[d.clone()], ReportFormat::Markdown));
    let csv = render_report(&r, &[d], ReportFormat::Csv);
    assert!(!csv.contains("**"));
    assert!(csv.contains("delta,GPT-4o,pic_step_instructions,zero_shot,12.26"));
}
