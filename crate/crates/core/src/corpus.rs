//! Raw item ingestion, pair filtering, annotator agreement and corpus
//! statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::jsonl::{self, FileHeader, LineDiagnostic};
use crate::label::ToxicityLabel;
use crate::text;

pub const PAIRS_SCHEMA: &str = "pic.pairs";
pub const ANNOTATED_SCHEMA: &str = "pic.annotated-pairs";

const BUNDLED_KEYWORDS: &str = include_str!("../data/keywords.txt");
const BUNDLED_BLOCKLIST: &str = include_str!("../data/blocklist.txt");

/// Seed used by `Sample` selectors when none is given.
pub const DEFAULT_SEED: u64 = 20240719;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Platform {
    Weibo,
    RedNote,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawItem {
    pub source_id: String,
    pub platform: Platform,
    pub keyword: String,
    pub post_text: String,
    pub comment_text: String,
    pub fetched_at: NaiveDate,
}

/// Search keywords an item may have been collected under.
#[derive(Debug, Clone)]
pub struct KeywordConfig {
    keywords: Vec<String>,
    folded: HashSet<String>,
}

impl KeywordConfig {
    /// One keyword per line; blank lines and `#` comments are skipped.
    pub fn parse(source: &str) -> Self {
        let keywords: Vec<String> = source
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        let folded = keywords.iter().map(|k| text::fold(k)).collect();
        KeywordConfig { keywords, folded }
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_KEYWORDS)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Ok(Self::parse(&s))
    }

    pub fn contains(&self, keyword: &str) -> bool {
        self.folded.contains(&text::fold(keyword.trim()))
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<LineDiagnostic>,
}

/// Read a line-delimited raw dump, keeping only items that satisfy the
/// `RawItem` invariants. Rejected lines are reported, never fatal.
pub fn ingest_raw(path: &Path, keywords: &KeywordConfig) -> Result<(Vec<RawItem>, IngestReport)> {
    let (_, parsed, mut rejected) = jsonl::read_lenient::<RawItem>(path)?;
    let mut items = Vec::with_capacity(parsed.len());
    for (line, item) in parsed {
        let problem = if item.post_text.trim().is_empty() {
            Some("post_text is empty".to_string())
        } else if item.comment_text.trim().is_empty() {
            Some("comment_text is empty".to_string())
        } else if !keywords.contains(&item.keyword) {
            Some(format!("keyword {:?} is not in the keyword config", item.keyword))
        } else {
            None
        };
        match problem {
            Some(message) => rejected.push(LineDiagnostic { line, message }),
            None => items.push(item),
        }
    }
    rejected.sort_by_key(|d| d.line);
    let report = IngestReport {
        accepted: items.len(),
        rejected,
    };
    Ok((items, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DedupNormalization {
    /// Unicode NFC, whitespace runs collapsed to one space, trimmed.
    #[default]
    NfcWhitespaceCollapse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub explicit_blocklist: Vec<String>,
    pub drop_nonverbal: bool,
    #[serde(default)]
    pub dedup_normalization: DedupNormalization,
}

impl FilterConfig {
    /// Entries are case/width folded; empty entries are dropped.
    pub fn new(blocklist: impl IntoIterator<Item = String>, drop_nonverbal: bool) -> Self {
        let mut explicit_blocklist: Vec<String> = blocklist
            .into_iter()
            .map(|t| text::fold(t.trim()))
            .filter(|t| !t.is_empty())
            .collect();
        explicit_blocklist.dedup();
        FilterConfig {
            explicit_blocklist,
            drop_nonverbal,
            dedup_normalization: DedupNormalization::NfcWhitespaceCollapse,
        }
    }

    pub fn parse_blocklist(source: &str) -> Vec<String> {
        source
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    }

    pub fn with_blocklist_file(path: &Path, drop_nonverbal: bool) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Ok(Self::new(Self::parse_blocklist(&s), drop_nonverbal))
    }

    fn blocked_term(&self, comment: &str) -> Option<&str> {
        let folded = text::fold(comment);
        self.explicit_blocklist
            .iter()
            .find(|t| folded.contains(t.as_str()))
            .map(String::as_str)
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self::new(Self::parse_blocklist(BUNDLED_BLOCKLIST), true)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextCommentPair {
    pub pair_id: String,
    pub context: String,
    pub comment: String,
    pub keyword: String,
    pub platform: Platform,
}

impl ContextCommentPair {
    pub fn new(context: &str, comment: &str, keyword: &str, platform: Platform) -> Self {
        let context = text::normalize(context);
        let comment = text::normalize(comment);
        ContextCommentPair {
            pair_id: text::pair_id(&context, &comment),
            context,
            comment,
            keyword: keyword.trim().to_string(),
            platform,
        }
    }

    /// Check that `pair_id` is the content hash of the texts.
    pub fn verify_id(&self) -> Result<()> {
        let computed = text::pair_id(&self.context, &self.comment);
        if computed == self.pair_id {
            Ok(())
        } else {
            Err(CoreError::PairIdMismatch {
                recorded: self.pair_id.clone(),
                computed,
            })
        }
    }
}

/// Anything `build_pairs` can turn into a pair.
pub trait PairSource {
    fn context(&self) -> &str;
    fn comment(&self) -> &str;
    fn keyword(&self) -> &str;
    fn platform(&self) -> Platform;
}

impl PairSource for RawItem {
    fn context(&self) -> &str {
        &self.post_text
    }
    fn comment(&self) -> &str {
        &self.comment_text
    }
    fn keyword(&self) -> &str {
        &self.keyword
    }
    fn platform(&self) -> Platform {
        self.platform
    }
}

impl PairSource for ContextCommentPair {
    fn context(&self) -> &str {
        &self.context
    }
    fn comment(&self) -> &str {
        &self.comment
    }
    fn keyword(&self) -> &str {
        &self.keyword
    }
    fn platform(&self) -> Platform {
        self.platform
    }
}

/// Removal counts per filtering rule. Rules apply in field order, so an
/// emoji-only duplicate counts as nonverbal, not as a duplicate.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub nonverbal_count: usize,
    pub explicit_count: usize,
    pub dedup_count: usize,
    pub output: usize,
    /// Blocklist term → number of comments it removed.
    pub explicit_terms: BTreeMap<String, usize>,
}

pub fn build_pairs<S: PairSource>(
    items: &[S],
    cfg: &FilterConfig,
) -> (Vec<ContextCommentPair>, FilterReport) {
    let mut report = FilterReport {
        input: items.len(),
        ..FilterReport::default()
    };
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for item in items {
        let pair = ContextCommentPair::new(
            item.context(),
            item.comment(),
            item.keyword(),
            item.platform(),
        );
        if cfg.drop_nonverbal && text::is_nonverbal(&pair.comment) {
            report.nonverbal_count += 1;
            continue;
        }
        if let Some(term) = cfg.blocked_term(&pair.comment) {
            report.explicit_count += 1;
            *report.explicit_terms.entry(term.to_string()).or_default() += 1;
            continue;
        }
        if !seen.insert((pair.context.clone(), pair.comment.clone())) {
            report.dedup_count += 1;
            continue;
        }
        pairs.push(pair);
    }
    report.output = pairs.len();
    (pairs, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Agreement {
    Full,
    Disagree,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorLabel {
    pub annotator: String,
    pub label: ToxicityLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedPair {
    #[serde(flatten)]
    pub pair: ContextCommentPair,
    pub final_label: Option<ToxicityLabel>,
    pub annotator_labels: Vec<AnnotatorLabel>,
    pub agreement: Agreement,
}

impl AnnotatedPair {
    pub fn pair_id(&self) -> &str {
        &self.pair.pair_id
    }

    /// Check the stored agreement against the annotator labels.
    pub fn validate(&self) -> Result<()> {
        self.pair.verify_id()?;
        let all_same = self
            .annotator_labels
            .windows(2)
            .all(|w| w[0].label == w[1].label);
        let consistent = match (self.agreement, self.final_label) {
            (Agreement::Full, Some(l)) => {
                all_same && self.annotator_labels.iter().all(|a| a.label == l)
            }
            (Agreement::Disagree, None) => !all_same,
            _ => false,
        };
        if consistent {
            Ok(())
        } else {
            Err(CoreError::MissingFinalLabel(self.pair.pair_id.clone()))
        }
    }
}

/// Apply the full-agreement rule: the pair is retained with a final label
/// only when every required annotator gave the same label.
pub fn resolve_agreement(
    pair: ContextCommentPair,
    labels: Vec<AnnotatorLabel>,
    required_annotators: usize,
) -> Result<AnnotatedPair> {
    let distinct: HashSet<&str> = labels.iter().map(|l| l.annotator.as_str()).collect();
    if labels.len() != required_annotators || distinct.len() != labels.len() {
        return Err(CoreError::MissingSecondAnnotator {
            pair_id: pair.pair_id.clone(),
            found: distinct.len(),
            expected: required_annotators,
        });
    }
    let first = labels[0].label;
    let full = labels.iter().all(|l| l.label == first);
    Ok(AnnotatedPair {
        pair,
        final_label: full.then_some(first),
        annotator_labels: labels,
        agreement: if full {
            Agreement::Full
        } else {
            Agreement::Disagree
        },
    })
}

pub fn load_pairs(path: &Path) -> Result<Vec<ContextCommentPair>> {
    let (_, pairs) = jsonl::read_records::<ContextCommentPair>(path)?;
    for p in &pairs {
        p.verify_id()?;
    }
    Ok(pairs)
}

pub fn write_pairs(path: &Path, pairs: &[ContextCommentPair]) -> Result<()> {
    jsonl::write_records(path, Some(&FileHeader::new(PAIRS_SCHEMA)), pairs)
}

/// Load an annotated-pair file, validating ids and agreement fields.
pub fn load_annotated(path: &Path) -> Result<Vec<AnnotatedPair>> {
    let (_, pairs) = jsonl::read_records::<AnnotatedPair>(path)?;
    for p in &pairs {
        p.validate()?;
    }
    Ok(pairs)
}

pub fn write_annotated(path: &Path, pairs: &[AnnotatedPair]) -> Result<()> {
    jsonl::write_records(path, Some(&FileHeader::new(ANNOTATED_SCHEMA)), pairs)
}

/// The evaluation corpus: only fully agreed pairs.
pub fn evaluation_corpus(pairs: Vec<AnnotatedPair>) -> Vec<AnnotatedPair> {
    pairs
        .into_iter()
        .filter(|p| p.agreement == Agreement::Full && p.final_label.is_some())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub total: usize,
    pub per_label: BTreeMap<ToxicityLabel, usize>,
    /// Retained pairs over labeled input pairs; 0 for an empty corpus.
    pub retained_fraction: f64,
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total\t{}", self.total)?;
        for (label, count) in &self.per_label {
            writeln!(f, "{}\t{}\t{}", label, label.english_name(), count)?;
        }
        write!(f, "retained\t{:.4}", self.retained_fraction)
    }
}

/// Per-label counts over a fully agreed corpus. `labeled_input` is the
/// number of labeled pairs before agreement filtering, when known.
pub fn corpus_stats(corpus: &[AnnotatedPair], labeled_input: Option<usize>) -> Result<CorpusStats> {
    let mut per_label: BTreeMap<ToxicityLabel, usize> =
        ToxicityLabel::ALL.iter().map(|l| (*l, 0)).collect();
    for p in corpus {
        match (p.agreement, p.final_label) {
            (Agreement::Full, Some(l)) => *per_label.entry(l).or_default() += 1,
            _ => return Err(CoreError::MissingFinalLabel(p.pair.pair_id.clone())),
        }
    }
    let total = corpus.len();
    let denom = labeled_input.unwrap_or(total);
    let retained_fraction = if total == 0 || denom == 0 {
        0.0
    } else {
        total as f64 / denom as f64
    };
    Ok(CorpusStats {
        total,
        per_label,
        retained_fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorpusSelector {
    All,
    /// Pairs that have a six-step inference-chain exemplar.
    AnnotatedChains,
    ToxicOnly,
    Sample { n: usize, seed: u64 },
}

impl FromStr for CorpusSelector {
    type Err = CoreError;

    /// `all`, `annotated-chains`, `toxic`, `sample:N` or `sample:N:SEED`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || CoreError::InvalidSelector(s.to_string());
        match s.trim() {
            "all" => Ok(CorpusSelector::All),
            "annotated-chains" | "chains" => Ok(CorpusSelector::AnnotatedChains),
            "toxic" | "toxic-only" => Ok(CorpusSelector::ToxicOnly),
            other => {
                let rest = other.strip_prefix("sample:").ok_or_else(bad)?;
                let mut parts = rest.split(':');
                let n = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
                let seed = match parts.next() {
                    Some(p) => p.parse().map_err(|_| bad())?,
                    None => DEFAULT_SEED,
                };
                if parts.next().is_some() {
                    return Err(bad());
                }
                Ok(CorpusSelector::Sample { n, seed })
            }
        }
    }
}

impl fmt::Display for CorpusSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusSelector::All => f.write_str("all"),
            CorpusSelector::AnnotatedChains => f.write_str("annotated-chains"),
            CorpusSelector::ToxicOnly => f.write_str("toxic"),
            CorpusSelector::Sample { n, seed } => write!(f, "sample:{n}:{seed}"),
        }
    }
}

/// Select an evaluation subset, preserving corpus order.
pub fn select_subset(
    corpus: &[AnnotatedPair],
    selector: &CorpusSelector,
    chain_pair_ids: &HashSet<String>,
) -> Result<Vec<AnnotatedPair>> {
    let picked: Vec<AnnotatedPair> = match selector {
        CorpusSelector::All => corpus.to_vec(),
        CorpusSelector::AnnotatedChains => corpus
            .iter()
            .filter(|p| chain_pair_ids.contains(p.pair_id()))
            .cloned()
            .collect(),
        CorpusSelector::ToxicOnly => corpus
            .iter()
            .filter(|p| p.final_label.is_some_and(ToxicityLabel::is_toxic))
            .cloned()
            .collect(),
        CorpusSelector::Sample { n, seed } => {
            if *n > corpus.len() {
                return Err(CoreError::SampleTooLarge {
                    requested: *n,
                    available: corpus.len(),
                });
            }
            let mut idx: Vec<usize> = (0..corpus.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            idx.shuffle(&mut rng);
            idx.truncate(*n);
            idx.sort_unstable();
            idx.into_iter().map(|i| corpus[i].clone()).collect()
        }
    };
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(ctx: &str, comment: &str) -> ContextCommentPair {
        ContextCommentPair::new(ctx, comment, "彩礼", Platform::Weibo)
    }

    fn labels(a: ToxicityLabel, b: ToxicityLabel) -> Vec<AnnotatorLabel> {
        vec![
            AnnotatorLabel {
                annotator: "ann1".into(),
                label: a,
            },
            AnnotatorLabel {
                annotator: "ann2".into(),
                label: b,
            },
        ]
    }

    fn agreed(ctx: &str, label: ToxicityLabel) -> AnnotatedPair {
        resolve_agreement(pair(ctx, "评论"), labels(label, label), 2).unwrap()
    }

    #[test]
    fn bundled_keywords_match_published_list() {
        let kw = KeywordConfig::bundled();
        // The printed keyword table has 56 cells although the prose says 55.
        assert_eq!(kw.keywords().len(), 56);
        assert!(kw.contains("彩礼"));
        assert!(kw.contains("OOTD"));
        assert!(kw.contains("P图"));
        assert!(!kw.contains("天气"));
    }

    #[test]
    fn agreement_full_and_disagree() {
        use ToxicityLabel::*;
        let full = resolve_agreement(pair("c", "x"), labels(WomenTargeted, WomenTargeted), 2)
            .unwrap();
        assert_eq!(full.agreement, Agreement::Full);
        assert_eq!(full.final_label, Some(WomenTargeted));
        full.validate().unwrap();

        let dis = resolve_agreement(pair("c", "x"), labels(WomenTargeted, MenTargeted), 2).unwrap();
        assert_eq!(dis.agreement, Agreement::Disagree);
        assert_eq!(dis.final_label, None);
        dis.validate().unwrap();
        assert!(evaluation_corpus(vec![dis]).is_empty());
    }

    #[test]
    fn agreement_requires_two_distinct_annotators() {
        let one = vec![AnnotatorLabel {
            annotator: "ann1".into(),
            label: ToxicityLabel::NonToxic,
        }];
        assert!(matches!(
            resolve_agreement(pair("c", "x"), one, 2),
            Err(CoreError::MissingSecondAnnotator { found: 1, .. })
        ));
        let mut same = labels(ToxicityLabel::NonToxic, ToxicityLabel::NonToxic);
        same[1].annotator = "ann1".into();
        assert!(resolve_agreement(pair("c", "x"), same, 2).is_err());
    }

    #[test]
    fn stats_counts_each_label() {
        use ToxicityLabel::*;
        let corpus: Vec<_> = [NonToxic, WomenTargeted, MenTargeted, AntiToxic]
            .iter()
            .enumerate()
            .map(|(i, l)| agreed(&format!("帖子{i}"), *l))
            .collect();
        let stats = corpus_stats(&corpus, None).unwrap();
        assert_eq!(stats.total, 4);
        assert!(stats.per_label.values().all(|c| *c == 1));
        assert_eq!(stats.per_label.values().sum::<usize>(), stats.total);
    }

    #[test]
    fn stats_of_empty_corpus_are_zero() {
        let stats = corpus_stats(&[], None).unwrap();
        assert_eq!(stats.total, 0);
        assert_eq!(stats.per_label.len(), 4);
        assert!(stats.per_label.values().all(|c| *c == 0));
        assert_eq!(stats.retained_fraction, 0.0);
    }

    #[test]
    fn stats_reject_unlabeled_pair() {
        use ToxicityLabel::*;
        let dis = resolve_agreement(pair("c", "x"), labels(NonToxic, AntiToxic), 2).unwrap();
        assert!(matches!(
            corpus_stats(&[dis], None),
            Err(CoreError::MissingFinalLabel(_))
        ));
    }

    #[test]
    fn sample_is_deterministic_and_bounded() {
        let corpus: Vec<_> = (0..50)
            .map(|i| agreed(&format!("帖子{i}"), ToxicityLabel::NonToxic))
            .collect();
        let sel = CorpusSelector::Sample { n: 10, seed: 7 };
        let a = select_subset(&corpus, &sel, &HashSet::new()).unwrap();
        let b = select_subset(&corpus, &sel, &HashSet::new()).unwrap();
        let ids = |v: &[AnnotatedPair]| v.iter().map(|p| p.pair_id().to_string()).collect::<Vec<_>>();
        assert_eq!(a.len(), 10);
        assert_eq!(ids(&a), ids(&b));
        let other = select_subset(&corpus, &CorpusSelector::Sample { n: 10, seed: 8 }, &HashSet::new())
            .unwrap();
        assert_ne!(ids(&a), ids(&other));
        assert!(matches!(
            select_subset(&corpus, &CorpusSelector::Sample { n: 51, seed: 7 }, &HashSet::new()),
            Err(CoreError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn selector_parses() {
        assert_eq!("all".parse::<CorpusSelector>().unwrap(), CorpusSelector::All);
        assert_eq!(
            "sample:10:7".parse::<CorpusSelector>().unwrap(),
            CorpusSelector::Sample { n: 10, seed: 7 }
        );
        assert_eq!(
            "sample:3".parse::<CorpusSelector>().unwrap(),
            CorpusSelector::Sample {
                n: 3,
                seed: DEFAULT_SEED
            }
        );
        assert!("sample:x".parse::<CorpusSelector>().is_err());
        assert!("bogus".parse::<CorpusSelector>().is_err());
        let s = CorpusSelector::Sample { n: 4, seed: 9 };
        assert_eq!(s.to_string().parse::<CorpusSelector>().unwrap(), s);
    }

    #[test]
    fn blocklist_is_folded() {
        let cfg = FilterConfig::new(vec!["CNM".into(), "  ".into()], true);
        assert_eq!(cfg.explicit_blocklist, vec!["cnm".to_string()]);
        assert_eq!(cfg.blocked_term("ＣＮＭ！！"), Some("cnm"));
    }
}
