//! Accuracy, confusion matrices, baseline deltas, ablation curves and the
//! table renderers built on them.
//!
//! Percentages are held as integer hundredths ([`Percent`]) so that deltas
//! between two-decimal values are exact.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::label::ToxicityLabel;
use crate::promptkit::PromptMethod;
use crate::records::RunRecord;

/// A percentage with two decimals, stored as hundredths of a point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Percent(pub i64);

impl Percent {
    /// `100 * num / den`, rounded half-up to two decimals.
    pub fn ratio(num: u64, den: u64) -> Percent {
        assert!(den > 0, "ratio with zero denominator");
        let scaled = 2 * 10_000 * num as u128 + den as u128;
        Percent((scaled / (2 * den as u128)) as i64)
    }

    /// Mean of several percentages, rounded half-up (half away from zero).
    pub fn mean(values: &[Percent]) -> Option<Percent> {
        if values.is_empty() {
            return None;
        }
        let sum: i64 = values.iter().map(|p| p.0).sum();
        let n = values.len() as i64;
        let rounded = (2 * sum.abs() + n) / (2 * n);
        Some(Percent(if sum < 0 { -rounded } else { rounded }))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// `+12.26` / `-5.49` / `+0.00`.
    pub fn signed(self) -> String {
        if self.0 < 0 {
            self.to_string()
        } else {
            format!("+{self}")
        }
    }
}

impl std::ops::Sub for Percent {
    type Output = Percent;
    fn sub(self, rhs: Percent) -> Percent {
        Percent(self.0 - rhs.0)
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Percent {
    type Err = CoreError;

    /// Accepts at most two decimals; `76.2` is 76.20.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || CoreError::InvalidMethod(format!("not a two-decimal percentage: {s:?}"));
        let t = s.trim().trim_end_matches('%');
        let (neg, t) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let (int, frac) = t.split_once('.').unwrap_or((t, ""));
        if int.is_empty() || frac.len() > 2 || !int.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        if !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let whole: i64 = int.parse().map_err(|_| bad())?;
        let cents: i64 = format!("{frac:0<2}").parse().map_err(|_| bad())?;
        let v = whole * 100 + cents;
        Ok(Percent(if neg { -v } else { v }))
    }
}

type Group = (String, PromptMethod);

fn group_of(records: &[RunRecord]) -> Result<Group> {
    let first = records.first().ok_or(CoreError::EmptyRecords)?;
    let group = (first.model_name.clone(), first.method);
    if let Some(other) = records
        .iter()
        .find(|r| r.model_name != group.0 || r.method != group.1)
    {
        return Err(CoreError::MixedGroup(format!(
            "({}, {}) and ({}, {})",
            group.0, group.1, other.model_name, other.method
        )));
    }
    Ok(group)
}

/// 4-way accuracy of one (model, method) group. Unparsed and errored
/// records count as incorrect.
pub fn accuracy(records: &[RunRecord]) -> Result<Percent> {
    group_of(records)?;
    let correct = records.iter().filter(|r| r.is_correct()).count();
    Ok(Percent::ratio(correct as u64, records.len() as u64))
}

/// Rows are gold labels A–D; columns are predictions A–D then unparsed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 5]; 4],
}

impl ConfusionMatrix {
    pub const UNPARSED: usize = 4;

    pub fn add(&mut self, gold: ToxicityLabel, predicted: Option<ToxicityLabel>) {
        let col = predicted.map_or(Self::UNPARSED, ToxicityLabel::index);
        self.counts[gold.index()][col] += 1;
    }

    pub fn support(&self, gold: ToxicityLabel) -> u64 {
        self.counts[gold.index()].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    pub fn unparsed(&self) -> u64 {
        self.counts.iter().map(|row| row[Self::UNPARSED]).sum()
    }

    pub fn accuracy(&self) -> Option<Percent> {
        let total = self.total();
        (total > 0).then(|| Percent::ratio(self.trace(), total))
    }

    pub fn recall(&self, gold: ToxicityLabel) -> Option<Percent> {
        let support = self.support(gold);
        (support > 0).then(|| Percent::ratio(self.counts[gold.index()][gold.index()], support))
    }

    /// Toxic (B, C) versus everything else; unparsed counts as wrong.
    pub fn binary_accuracy(&self) -> Option<Percent> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let mut correct = 0;
        for gold in ToxicityLabel::ALL {
            for pred in ToxicityLabel::ALL {
                if gold.is_toxic() == pred.is_toxic() {
                    correct += self.counts[gold.index()][pred.index()];
                }
            }
        }
        Some(Percent::ratio(correct, total))
    }
}

pub fn confusion_matrix(records: &[RunRecord]) -> Result<ConfusionMatrix> {
    group_of(records)?;
    let mut m = ConfusionMatrix::default();
    for r in records {
        m.add(r.gold, r.predicted());
    }
    Ok(m)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalReport {
    /// Column order for rendering.
    pub models: Vec<String>,
    pub rows: BTreeMap<Group, Percent>,
    pub per_class: BTreeMap<(String, PromptMethod, ToxicityLabel), Percent>,
    pub confusion: BTreeMap<Group, ConfusionMatrix>,
    pub unparsed_rate: BTreeMap<Group, Percent>,
    pub binary_accuracy: BTreeMap<Group, Percent>,
}

impl EvalReport {
    /// Aggregate run records of any number of (model, method) groups.
    pub fn from_records(records: &[RunRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(CoreError::EmptyRecords);
        }
        let mut report = EvalReport::default();
        let mut matrices: BTreeMap<Group, ConfusionMatrix> = BTreeMap::new();
        let mut seen = HashSet::new();
        for r in records {
            let group = (r.model_name.clone(), r.method);
            if !seen.insert((r.pair_id.as_str(), r.model_name.as_str(), r.method)) {
                return Err(CoreError::DuplicateRecord {
                    pair_id: r.pair_id.clone(),
                    group: format!("{}/{}", r.model_name, r.method),
                });
            }
            matrices.entry(group).or_default().add(r.gold, r.predicted());
        }
        let models: BTreeSet<&String> = matrices.keys().map(|(m, _)| m).collect();
        report.models = models.into_iter().cloned().collect();
        for (group, m) in &matrices {
            let total = m.total();
            report
                .rows
                .insert(group.clone(), m.accuracy().expect("non-empty group"));
            report
                .unparsed_rate
                .insert(group.clone(), Percent::ratio(m.unparsed(), total));
            if let Some(b) = m.binary_accuracy() {
                report.binary_accuracy.insert(group.clone(), b);
            }
            for label in ToxicityLabel::ALL {
                if let Some(recall) = m.recall(label) {
                    report
                        .per_class
                        .insert((group.0.clone(), group.1, label), recall);
                }
            }
        }
        report.confusion = matrices;
        Ok(report)
    }

    /// Parse a published accuracy table: a CSV header `method,<model>,...`
    /// followed by one row per method id with two-decimal accuracies.
    pub fn from_accuracy_table(csv: &str) -> Result<Self> {
        let mut lines = csv
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or(CoreError::EmptyRecords)?;
        let models: Vec<String> = header
            .split(',')
            .skip(1)
            .map(|s| s.trim().to_string())
            .collect();
        let mut report = EvalReport {
            models: models.clone(),
            ..EvalReport::default()
        };
        for line in lines {
            let mut cells = line.split(',').map(str::trim);
            let method: PromptMethod = cells.next().unwrap_or_default().parse()?;
            for (model, cell) in models.iter().zip(cells) {
                if !cell.is_empty() {
                    report.rows.insert((model.clone(), method), cell.parse()?);
                }
            }
        }
        Ok(report)
    }

    pub fn accuracy_of(&self, model: &str, method: PromptMethod) -> Option<Percent> {
        self.rows.get(&(model.to_string(), method)).copied()
    }

    pub fn methods(&self) -> Vec<PromptMethod> {
        let set: BTreeSet<PromptMethod> = self.rows.keys().map(|(_, m)| *m).collect();
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaReport {
    pub baseline: PromptMethod,
    /// (model, method) → accuracy(method) − accuracy(baseline).
    pub deltas: BTreeMap<Group, Percent>,
}

impl DeltaReport {
    pub fn get(&self, model: &str, method: PromptMethod) -> Option<Percent> {
        self.deltas.get(&(model.to_string(), method)).copied()
    }
}

pub fn delta_table(report: &EvalReport, baseline: PromptMethod) -> Result<DeltaReport> {
    let mut deltas = BTreeMap::new();
    for model in &report.models {
        let methods: Vec<PromptMethod> = report
            .rows
            .keys()
            .filter(|(m, _)| m == model)
            .map(|(_, method)| *method)
            .collect();
        if methods.is_empty() {
            continue;
        }
        let base = report
            .accuracy_of(model, baseline)
            .ok_or_else(|| CoreError::MissingBaseline {
                model: model.clone(),
                method: baseline.to_string(),
            })?;
        for method in methods.into_iter().filter(|m| *m != baseline) {
            let acc = report.accuracy_of(model, method).expect("listed method");
            deltas.insert((model.clone(), method), acc - base);
        }
    }
    Ok(DeltaReport { baseline, deltas })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AblationCurve {
    /// (model, k) → accuracy; k = 0 is the zero-shot baseline.
    pub points: BTreeMap<(String, usize), Percent>,
}

impl AblationCurve {
    pub fn models(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.points.keys().map(|(m, _)| m.as_str()).collect();
        set.into_iter().collect()
    }

    /// Steps missing from 0..=6 for `model`.
    pub fn missing_steps(&self, model: &str) -> Vec<usize> {
        (0..=6)
            .filter(|k| !self.points.contains_key(&(model.to_string(), *k)))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.models().iter().all(|m| self.missing_steps(m).is_empty())
    }

    /// Plot-ready tab-separated table.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("model\tk\taccuracy\n");
        for ((model, k), acc) in &self.points {
            out.push_str(&format!("{model}\t{k}\t{acc}\n"));
        }
        out
    }
}

/// One accuracy per (model, k) over zero-shot and cumulative-step records;
/// records of other methods are ignored.
pub fn ablation_curve(records: &[RunRecord]) -> Result<AblationCurve> {
    let mut groups: BTreeMap<(String, usize), Vec<&RunRecord>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for r in records {
        let Some(k) = r.method.ablation_step() else {
            continue;
        };
        if !seen.insert((r.model_name.as_str(), k, r.pair_id.as_str())) {
            return Err(CoreError::DuplicateRecord {
                pair_id: r.pair_id.clone(),
                group: format!("{}/k={k}", r.model_name),
            });
        }
        groups.entry((r.model_name.clone(), k)).or_default().push(r);
    }
    if groups.is_empty() {
        return Err(CoreError::EmptyRecords);
    }
    let points = groups
        .into_iter()
        .map(|(key, rs)| {
            let correct = rs.iter().filter(|r| r.is_correct()).count() as u64;
            (key, Percent::ratio(correct, rs.len() as u64))
        })
        .collect();
    Ok(AblationCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(CoreError::InvalidMethod(format!("unknown report format {other:?}"))),
        }
    }
}

fn markdown_table(
    out: &mut String,
    models: &[String],
    methods: &[PromptMethod],
    cell: impl Fn(&str, PromptMethod) -> Option<Percent>,
    bold_best: bool,
    with_average: bool,
    signed: bool,
) {
    let fmt = |p: Percent| if signed { p.signed() } else { p.to_string() };
    let mut columns: Vec<Vec<Option<Percent>>> = models
        .iter()
        .map(|m| methods.iter().map(|me| cell(m, *me)).collect())
        .collect();
    let mut headers: Vec<String> = models.to_vec();
    if with_average && models.len() > 1 {
        let avg = (0..methods.len())
            .map(|row| {
                let vals: Option<Vec<Percent>> = columns.iter().map(|c| c[row]).collect();
                vals.and_then(|v| Percent::mean(&v))
            })
            .collect();
        columns.push(avg);
        headers.push("Average".into());
    }
    out.push_str("| Method |");
    for h in &headers {
        out.push_str(&format!(" {h} |"));
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(headers.len()));
    out.push('\n');
    let best: Vec<Option<Percent>> = columns
        .iter()
        .map(|c| c.iter().flatten().max().copied())
        .collect();
    for (row, method) in methods.iter().enumerate() {
        out.push_str(&format!("| {} |", method.display_name()));
        for (col, values) in columns.iter().enumerate() {
            match values[row] {
                Some(v) if bold_best && Some(v) == best[col] => {
                    out.push_str(&format!(" **{}** |", fmt(v)))
                }
                Some(v) => out.push_str(&format!(" {} |", fmt(v))),
                None => out.push_str(" – |"),
            }
        }
        out.push('\n');
    }
}

/// Render accuracy (best value per column in bold), deltas and the
/// per-class sections. Output is byte-stable for equal inputs.
pub fn render_report(report: &EvalReport, deltas: &[DeltaReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => render_markdown(report, deltas),
        ReportFormat::Csv => render_csv(report, deltas),
    }
}

fn render_markdown(report: &EvalReport, deltas: &[DeltaReport]) -> String {
    let methods = report.methods();
    let mut out = String::from("## Accuracy (%)\n\n");
    markdown_table(
        &mut out,
        &report.models,
        &methods,
        |m, me| report.accuracy_of(m, me),
        true,
        true,
        false,
    );
    for d in deltas {
        out.push_str(&format!(
            "\n## Change vs {} (percentage points)\n\n",
            d.baseline.display_name()
        ));
        let rows: Vec<PromptMethod> = methods.iter().copied().filter(|m| *m != d.baseline).collect();
        markdown_table(&mut out, &report.models, &rows, |m, me| d.get(m, me), false, false, true);
    }
    if !report.binary_accuracy.is_empty() {
        out.push_str("\n## Binary view: toxic (B, C) vs non-toxic (A, D) accuracy (%)\n\n");
        markdown_table(
            &mut out,
            &report.models,
            &methods,
            |m, me| report.binary_accuracy.get(&(m.to_string(), me)).copied(),
            false,
            false,
            false,
        );
    }
    if !report.unparsed_rate.is_empty() {
        out.push_str("\n## Unparsed responses (%)\n\n");
        markdown_table(
            &mut out,
            &report.models,
            &methods,
            |m, me| report.unparsed_rate.get(&(m.to_string(), me)).copied(),
            false,
            false,
            false,
        );
    }
    if !report.per_class.is_empty() {
        out.push_str("\n## Per-class recall (%)\n\n| Model | Method | A | B | C | D |\n|---|---|---:|---:|---:|---:|\n");
        for (model, method) in report.confusion.keys() {
            out.push_str(&format!("| {model} | {} |", method.display_name()));
            for label in ToxicityLabel::ALL {
                match report.per_class.get(&(model.clone(), *method, label)) {
                    Some(v) => out.push_str(&format!(" {v} |")),
                    None => out.push_str(" – |"),
                }
            }
            out.push('\n');
        }
    }
    if !report.confusion.is_empty() {
        out.push_str("\n## Confusion matrices (rows: gold, columns: predicted)\n");
        for ((model, method), m) in &report.confusion {
            out.push_str(&format!(
                "\n### {model} / {}\n\n| gold \\ pred | A | B | C | D | unparsed |\n|---|---:|---:|---:|---:|---:|\n",
                method.display_name()
            ));
            for label in ToxicityLabel::ALL {
                out.push_str(&format!("| {label} |"));
                for c in m.counts[label.index()] {
                    out.push_str(&format!(" {c} |"));
                }
                out.push('\n');
            }
        }
    }
    out
}

fn render_csv(report: &EvalReport, deltas: &[DeltaReport]) -> String {
    let mut out = String::from("metric,model,method,baseline,value\n");
    for ((model, method), v) in &report.rows {
        out.push_str(&format!("accuracy,{model},{method},,{v}\n"));
    }
    for d in deltas {
        for ((model, method), v) in &d.deltas {
            out.push_str(&format!("delta,{model},{method},{},{v}\n", d.baseline));
        }
    }
    for ((model, method), v) in &report.binary_accuracy {
        out.push_str(&format!("binary_accuracy,{model},{method},,{v}\n"));
    }
    for ((model, method), v) in &report.unparsed_rate {
        out.push_str(&format!("unparsed_rate,{model},{method},,{v}\n"));
    }
    for ((model, method, label), v) in &report.per_class {
        out.push_str(&format!("recall_{label},{model},{method},,{v}\n"));
    }
    out
}

fn cell(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', "<br>")
}

/// Side-by-side reasoning traces and verdicts of one pair under several
/// methods (and models), as a markdown table.
pub fn qualitative_diff(pair_id: &str, records: &[RunRecord]) -> Result<String> {
    let mut columns: Vec<&RunRecord> = records.iter().filter(|r| r.pair_id == pair_id).collect();
    if columns.is_empty() {
        return Err(CoreError::PairNotFound(pair_id.to_string()));
    }
    columns.sort_by(|a, b| (a.method, &a.model_name).cmp(&(b.method, &b.model_name)));
    if columns.len() < 2 {
        return Err(CoreError::NotEnoughMethods(columns.len()));
    }
    let gold = columns[0].gold;
    let mut out = format!(
        "## Pair {pair_id}\n\nGold label: {} ({})\n\n| Step |",
        gold,
        gold.option_text()
    );
    for r in &columns {
        out.push_str(&format!(" {} / {} |", r.method.display_name(), r.model_name));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(columns.len()));
    out.push('\n');
    let indices: BTreeSet<usize> = columns
        .iter()
        .flat_map(|r| r.chain.steps.iter().map(|s| s.index))
        .collect();
    for index in indices {
        out.push_str(&format!("| {index} |"));
        for r in &columns {
            let text = r
                .chain
                .steps
                .iter()
                .find(|s| s.index == index)
                .map(|s| cell(&s.text))
                .unwrap_or_default();
            out.push_str(&format!(" {text} |"));
        }
        out.push('\n');
    }
    out.push_str("| Verdict |");
    for r in &columns {
        match r.predicted() {
            Some(l) => out.push_str(&format!(" {} ({}) |", l, l.option_text())),
            None => out.push_str(" unparsed |"),
        }
    }
    out.push('\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parsing::{ChainTrace, ParseRule, ParsedVerdict};
    use crate::records::TokenUsage;
    use ToxicityLabel::*;

    fn record(pair: &str, method: PromptMethod, gold: ToxicityLabel, pred: Option<ToxicityLabel>) -> RunRecord {
        RunRecord {
            pair_id: pair.into(),
            model_name: "m".into(),
            method,
            prompt_hash: String::new(),
            raw_response: String::new(),
            verdict: ParsedVerdict {
                label: pred,
                rule: if pred.is_some() { ParseRule::SoleLetter } else { ParseRule::None },
                evidence: pred.map(|l| l.to_string()).unwrap_or_default(),
            },
            gold,
            chain: ChainTrace::default(),
            usage: TokenUsage::default(),
            latency_ms: 0,
            timestamp: String::new(),
            error: None,
        }
    }

    #[test]
    fn percent_rounding_and_format() {
        assert_eq!(Percent::ratio(2, 4).to_string(), "50.00");
        assert_eq!(Percent::ratio(13, 20).to_string(), "65.00");
        assert_eq!(Percent::ratio(1, 3).to_string(), "33.33");
        assert_eq!(Percent::ratio(2, 3).to_string(), "66.67");
        // 1/8 = 12.5% exactly; 1/16 = 6.25%; 1/32 = 3.125% rounds up.
        assert_eq!(Percent::ratio(1, 32).to_string(), "3.13");
        assert_eq!(Percent(-549).to_string(), "-5.49");
        assert_eq!(Percent(5).signed(), "+0.05");
        assert_eq!("76.21".parse::<Percent>().unwrap(), Percent(7621));
        assert_eq!("47.0".parse::<Percent>().unwrap(), Percent(4700));
        assert_eq!("-2".parse::<Percent>().unwrap(), Percent(-200));
        assert!("1.234".parse::<Percent>().is_err());
        assert!("x".parse::<Percent>().is_err());
        assert_eq!(Percent::mean(&[Percent(1), Percent(2)]), Some(Percent(2)));
    }

    #[test]
    fn accuracy_basic() {
        let rs = vec![
            record("1", PromptMethod::ZeroShot, NonToxic, Some(NonToxic)),
            record("2", PromptMethod::ZeroShot, WomenTargeted, Some(WomenTargeted)),
            record("3", PromptMethod::ZeroShot, MenTargeted, Some(NonToxic)),
            record("4", PromptMethod::ZeroShot, AntiToxic, None),
        ];
        assert_eq!(accuracy(&rs).unwrap(), Percent(5000));
        let unparsed: Vec<_> = (0..3)
            .map(|i| record(&i.to_string(), PromptMethod::ZeroShot, NonToxic, None))
            .collect();
        assert_eq!(accuracy(&unparsed).unwrap().to_string(), "0.00");
        assert!(matches!(accuracy(&[]), Err(CoreError::EmptyRecords)));
    }

    #[test]
    fn accuracy_rejects_mixed_groups() {
        let rs = vec![
            record("1", PromptMethod::ZeroShot, NonToxic, Some(NonToxic)),
            record("1", PromptMethod::CoT, NonToxic, Some(NonToxic)),
        ];
        assert!(matches!(accuracy(&rs), Err(CoreError::MixedGroup(_))));
    }

    #[test]
    fn errored_record_counts_as_unparsed() {
        let mut r = record("1", PromptMethod::ZeroShot, NonToxic, Some(NonToxic));
        r.error = Some("exhausted retries".into());
        assert!(!r.is_correct());
        let m = confusion_matrix(&[r]).unwrap();
        assert_eq!(m.counts[0][ConfusionMatrix::UNPARSED], 1);
    }

    #[test]
    fn confusion_shapes() {
        let diag: Vec<_> = ToxicityLabel::ALL
            .iter()
            .enumerate()
            .map(|(i, l)| record(&i.to_string(), PromptMethod::CoT, *l, Some(*l)))
            .collect();
        let m = confusion_matrix(&diag).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                assert_eq!(m.counts[i][j], u64::from(i == j));
            }
        }
        let all_a: Vec<_> = ToxicityLabel::ALL
            .iter()
            .enumerate()
            .map(|(i, l)| record(&i.to_string(), PromptMethod::CoT, *l, Some(NonToxic)))
            .collect();
        let m = confusion_matrix(&all_a).unwrap();
        assert!(m.counts.iter().all(|row| row[0] == 1 && row[1..].iter().all(|c| *c == 0)));
    }

    #[test]
    fn ablation_curve_shape() {
        let mut rs = Vec::new();
        for k in 0..=6 {
            let method = if k == 0 {
                PromptMethod::ZeroShot
            } else {
                PromptMethod::AblationCumulative(k)
            };
            if k == 2 {
                continue;
            }
            rs.push(record("p", method, MenTargeted, Some(MenTargeted)));
        }
        rs.push(record("p", PromptMethod::CoT, MenTargeted, None));
        let curve = ablation_curve(&rs).unwrap();
        assert_eq!(curve.points.len(), 6);
        assert_eq!(curve.missing_steps("m"), vec![2]);
        assert!(!curve.is_complete());
        assert!(curve.to_tsv().starts_with("model\tk\taccuracy\nm\t0\t100.00\n"));

        rs.push(record("p", PromptMethod::AblationCumulative(3), MenTargeted, None));
        assert!(matches!(
            ablation_curve(&rs),
            Err(CoreError::DuplicateRecord { .. })
        ));
    }

    #[test]
    fn diff_requires_two_methods() {
        let rs = vec![record("p", PromptMethod::CoT, MenTargeted, Some(AntiToxic))];
        assert!(matches!(
            qualitative_diff("p", &rs),
            Err(CoreError::NotEnoughMethods(1))
        ));
        assert!(matches!(
            qualitative_diff("q", &rs),
            Err(CoreError::PairNotFound(_))
        ));
    }

    #[test]
    fn diff_with_empty_chains_shows_verdicts() {
        let rs = vec![
            record("p", PromptMethod::CoT, MenTargeted, Some(AntiToxic)),
            record("p", PromptMethod::PicOneShot, MenTargeted, None),
        ];
        let out = qualitative_diff("p", &rs).unwrap();
        assert!(out.contains("| Verdict | D (反对歧视) | unparsed |"));
    }

    #[test]
    fn report_without_per_class_omits_section() {
        let report = EvalReport::from_accuracy_table("method,m\nzero_shot,50.00\n").unwrap();
        let md = render_report(&report, &[], ReportFormat::Markdown);
        assert!(!md.contains("Per-class"));
        assert!(!md.contains("Confusion"));
        assert_eq!(md, render_report(&report, &[], ReportFormat::Markdown));
    }
}
