//! Verdict and reasoning-trace extraction from free-form model output.
//!
//! [`parse_choice`] tries four rules in priority order and stops at the
//! first that matches:
//!
//! 1. `LabeledAnswer`: an option letter written next to its option text,
//!    e.g. `c.歧视男性`. The last such mention wins, and runs of adjacent
//!    mentions (an echoed option list) are ignored.
//! 2. `TrailingOption`: an answer cue followed by a letter (`答案是 c`,
//!    `选项：B`, `Answer: d`), or a short last line holding a lone letter.
//! 3. `OptionTextMatch`: exactly one distinct option phrase appears.
//! 4. `SoleLetter`: exactly one distinct standalone letter A–D appears.
//!
//! Matching runs on an NFKC + lowercase fold of the text so that full-width
//! letters and punctuation behave like their ASCII forms.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::label::ToxicityLabel;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParseRule {
    LabeledAnswer,
    TrailingOption,
    OptionTextMatch,
    SoleLetter,
    None,
}

impl ParseRule {
    pub const PRIORITY: [ParseRule; 4] = [
        ParseRule::LabeledAnswer,
        ParseRule::TrailingOption,
        ParseRule::OptionTextMatch,
        ParseRule::SoleLetter,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedVerdict {
    /// `None` means unparsed.
    pub label: Option<ToxicityLabel>,
    pub rule: ParseRule,
    pub evidence: String,
}

impl ParsedVerdict {
    pub fn unparsed() -> Self {
        ParsedVerdict {
            label: None,
            rule: ParseRule::None,
            evidence: String::new(),
        }
    }

    pub fn is_unparsed(&self) -> bool {
        self.label.is_none()
    }
}

const OPTION_PHRASES: [(&str, ToxicityLabel); 12] = [
    ("不存在歧视", ToxicityLabel::NonToxic),
    ("歧视女性", ToxicityLabel::WomenTargeted),
    ("歧视男性", ToxicityLabel::MenTargeted),
    ("反对歧视", ToxicityLabel::AntiToxic),
    ("non-toxicity", ToxicityLabel::NonToxic),
    ("non-toxic", ToxicityLabel::NonToxic),
    ("women-targeted toxicity", ToxicityLabel::WomenTargeted),
    ("women-targeted", ToxicityLabel::WomenTargeted),
    ("men-targeted toxicity", ToxicityLabel::MenTargeted),
    ("men-targeted", ToxicityLabel::MenTargeted),
    ("anti-toxicity", ToxicityLabel::AntiToxic),
    ("anti-toxic", ToxicityLabel::AntiToxic),
];

fn phrase_label(phrase: &str) -> Option<ToxicityLabel> {
    OPTION_PHRASES
        .iter()
        .find(|(p, _)| *p == phrase)
        .map(|(_, l)| *l)
}

fn labeled_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?:^|[^a-z0-9])([abcd])[ \t]*[.:、)\-]?[ \t]*(不存在歧视|歧视女性|歧视男性|反对歧视|non-toxicity|non-toxic|women-targeted toxicity|women-targeted|men-targeted toxicity|men-targeted|anti-toxicity|anti-toxic)",
        )
        .expect("labeled answer regex")
    })
}

fn cue_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"(?:答案|选项|选择|回答|answer|choice|option)[ \t]*(?:应该是|应为|是|为|选|is)?[ \t]*[:：]?[ \t*"'“”‘’(\[【「]*([abcd])(?:[^a-z0-9]|$)"#,
        )
        .expect("answer cue regex")
    })
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric()
}

/// Positions of letters a–d with no ASCII letter or digit on either side,
/// excluding ones that start an English phrase (`a comment`).
fn standalone_letters(folded: &str) -> Vec<(usize, char)> {
    let chars: Vec<(usize, char)> = folded.char_indices().collect();
    let mut out = Vec::new();
    for (i, &(pos, c)) in chars.iter().enumerate() {
        if !matches!(c, 'a'..='d') {
            continue;
        }
        let prev = i.checked_sub(1).map(|j| chars[j].1);
        let next = chars.get(i + 1).map(|x| x.1);
        if prev.is_some_and(is_word_char) || next.is_some_and(is_word_char) {
            continue;
        }
        if next.is_some_and(|n| n == ' ') && chars.get(i + 2).is_some_and(|x| x.1.is_ascii_alphabetic()) {
            continue;
        }
        out.push((pos, c));
    }
    out
}

fn rule_labeled_answer(folded: &str) -> Option<(ToxicityLabel, String)> {
    struct Hit {
        start: usize,
        end: usize,
        label: ToxicityLabel,
        evidence: String,
    }
    let mut hits = Vec::new();
    for caps in labeled_re().captures_iter(folded) {
        let letter = caps.get(1).expect("letter group");
        let phrase = caps.get(2).expect("phrase group");
        let by_letter = ToxicityLabel::from_letter(letter.as_str().chars().next()?);
        let by_phrase = phrase_label(phrase.as_str());
        if by_letter.is_some() && by_letter == by_phrase {
            hits.push(Hit {
                start: letter.start(),
                end: phrase.end(),
                label: by_phrase?,
                evidence: folded[letter.start()..phrase.end()].to_string(),
            });
        }
    }
    // An echoed option list shows up as two or more mentions separated only
    // by spaces or punctuation; none of them is a verdict.
    let mut listed = vec![false; hits.len()];
    for i in 1..hits.len() {
        let gap = &folded[hits[i - 1].end..hits[i].start];
        let adjacent = gap.chars().count() <= 3
            && gap
                .chars()
                .all(|c| c.is_whitespace() || c.is_ascii_punctuation() || "，、；。".contains(c));
        if adjacent && hits[i - 1].label != hits[i].label {
            listed[i - 1] = true;
            listed[i] = true;
        }
    }
    hits.into_iter()
        .zip(listed)
        .filter(|(_, l)| !l)
        .map(|(h, _)| (h.label, h.evidence))
        .last()
}

fn rule_trailing_option(folded: &str) -> Option<(ToxicityLabel, String)> {
    if let Some(caps) = cue_re().captures_iter(folded).last() {
        let m = caps.get(0).expect("whole match");
        let letter = caps.get(1).expect("letter group");
        let label = ToxicityLabel::from_letter(letter.as_str().chars().next()?)?;
        return Some((label, m.as_str().trim_end().to_string()));
    }
    let last_line = folded.lines().map(str::trim).rfind(|l| !l.is_empty())?;
    if last_line.chars().count() > 16 {
        return None;
    }
    let letters = standalone_letters(last_line);
    let (_, c) = *letters.first()?;
    if letters.iter().any(|(_, other)| *other != c) {
        return None;
    }
    Some((ToxicityLabel::from_letter(c)?, last_line.to_string()))
}

const NEGATIONS: [&str; 8] = ["不", "非", "没", "无", "没有", "不是", "并非", "并无"];

fn rule_option_text(folded: &str) -> Option<(ToxicityLabel, String)> {
    let mut found: Vec<(ToxicityLabel, &str)> = Vec::new();
    let mut i = 0;
    let bytes_len = folded.len();
    'scan: while i < bytes_len {
        if !folded.is_char_boundary(i) {
            i += 1;
            continue;
        }
        let rest = &folded[i..];
        for (phrase, label) in OPTION_PHRASES {
            if rest.starts_with(phrase) {
                let before = &folded[..i];
                let negated = NEGATIONS.iter().any(|n| before.ends_with(n));
                if !negated {
                    found.push((label, phrase));
                }
                i += phrase.len();
                continue 'scan;
            }
        }
        i += rest.chars().next().map_or(1, char::len_utf8);
    }
    let first = found.first()?.0;
    if found.iter().all(|(l, _)| *l == first) {
        Some((first, found[0].1.to_string()))
    } else {
        None
    }
}

fn rule_sole_letter(folded: &str) -> Option<(ToxicityLabel, String)> {
    let letters = standalone_letters(folded);
    let (_, first) = *letters.first()?;
    if letters.iter().all(|(_, c)| *c == first) {
        Some((ToxicityLabel::from_letter(first)?, first.to_string()))
    } else {
        None
    }
}

/// Apply a single rule to raw text, for rule replay and diagnostics.
pub fn apply_rule(rule: ParseRule, raw: &str) -> Option<(ToxicityLabel, String)> {
    let folded = text::fold(raw);
    match rule {
        ParseRule::LabeledAnswer => rule_labeled_answer(&folded),
        ParseRule::TrailingOption => rule_trailing_option(&folded),
        ParseRule::OptionTextMatch => rule_option_text(&folded),
        ParseRule::SoleLetter => rule_sole_letter(&folded),
        ParseRule::None => None,
    }
}

/// Extract the A–D verdict. Total: every input yields a verdict, possibly
/// unparsed.
pub fn parse_choice(raw: &str) -> ParsedVerdict {
    for rule in ParseRule::PRIORITY {
        if let Some((label, evidence)) = apply_rule(rule, raw) {
            return ParsedVerdict {
                label: Some(label),
                rule,
                evidence,
            };
        }
    }
    ParsedVerdict::unparsed()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub steps: Vec<TraceStep>,
    pub complete: bool,
}

fn enumerator_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^[ \t>#*]*(?:(?:step|步骤)[ \t]*(\d{1,2})[ \t]*[.:、)]?|第([一二三四五六七八九十]|\d{1,2})步[ \t]*[.:、]?|\((\d{1,2})\)|(\d{1,2})[ \t]*[.、)]|([一二三四五六七八九十])[、.])[ \t*]*",
        )
        .expect("enumerator regex")
    })
}

fn chinese_numeral(s: &str) -> Option<usize> {
    const DIGITS: &str = "一二三四五六七八九十";
    let mut chars = s.chars();
    let c = chars.next()?;
    if chars.next().is_some() {
        return None;
    }
    DIGITS.chars().position(|d| d == c).map(|p| p + 1)
}

fn enumerator(line: &str) -> Option<(usize, usize)> {
    let caps = enumerator_re().captures(line)?;
    let raw = (1..=5).find_map(|g| caps.get(g))?;
    let end = caps.get(0)?.end();
    // `3.5` is a number, not an enumerator.
    if caps.get(4).is_some() && line[end..].starts_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    let index = raw
        .as_str()
        .parse::<usize>()
        .ok()
        .or_else(|| chinese_numeral(raw.as_str()))?;
    (1..=20).contains(&index).then_some((index, end))
}

/// Split numbered reasoning steps out of a response. Enumerators must start
/// a line; an index that does not increase is treated as continuation text
/// (e.g. a nested list). Never fails: unnumbered prose gives an empty trace.
pub fn extract_chain(raw: &str, expected_steps: usize) -> ChainTrace {
    let normalized: String = raw.nfkc().collect();
    let mut steps: Vec<TraceStep> = Vec::new();
    for line in normalized.lines() {
        match enumerator(line) {
            Some((index, body_start)) if steps.last().is_none_or(|s| index > s.index) => {
                steps.push(TraceStep {
                    index,
                    text: line[body_start..].trim().to_string(),
                });
            }
            _ => {
                if let Some(current) = steps.last_mut() {
                    let t = line.trim();
                    if !t.is_empty() {
                        if !current.text.is_empty() {
                            current.text.push('\n');
                        }
                        current.text.push_str(t);
                    }
                }
            }
        }
    }
    let complete = steps.len() == expected_steps
        && steps.iter().enumerate().all(|(i, s)| s.index == i + 1);
    ChainTrace { steps, complete }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ToxicityLabel::*;

    #[test]
    fn labeled_answer_simple() {
        let v = parse_choice("因此选项中最符合的情况是：\n\nd.反对歧视。");
        assert_eq!(v.label, Some(AntiToxic));
        assert_eq!(v.rule, ParseRule::LabeledAnswer);
        assert_eq!(v.evidence, "d.反对歧视");
    }

    #[test]
    fn labeled_answer_full_width() {
        let v = parse_choice("答案：Ｃ．歧视男性");
        assert_eq!(v.label, Some(MenTargeted));
        assert_eq!(v.rule, ParseRule::LabeledAnswer);
    }

    #[test]
    fn echoed_option_list_is_ignored() {
        let v = parse_choice("选项有A.不存在歧视 B.歧视女性 C.歧视男性 D.反对歧视。我认为答案是 b");
        assert_eq!(v.label, Some(WomenTargeted));
        assert_eq!(v.rule, ParseRule::TrailingOption);
    }

    #[test]
    fn mismatched_letter_and_text_is_skipped() {
        let v = parse_choice("a.歧视男性");
        assert_ne!(v.rule, ParseRule::LabeledAnswer);
    }

    #[test]
    fn trailing_cue_beats_mid_text_letter() {
        let v = parse_choice("这个评论可能是b，但仔细分析后，答案是 c");
        assert_eq!(v.label, Some(MenTargeted));
        assert_eq!(v.rule, ParseRule::TrailingOption);
    }

    #[test]
    fn lone_letter_last_line() {
        let v = parse_choice("分析如下：评论在讽刺。\n\n**B**");
        assert_eq!(v.label, Some(WomenTargeted));
        assert_eq!(v.rule, ParseRule::TrailingOption);
    }

    #[test]
    fn option_text_without_letter() {
        let v = parse_choice("综合来看，这条评论属于反对歧视的情况。");
        assert_eq!(v.label, Some(AntiToxic));
        assert_eq!(v.rule, ParseRule::OptionTextMatch);
        let v = parse_choice("这条评论不存在歧视女性的内容");
        assert_eq!(v.label, Some(NonToxic));
    }

    #[test]
    fn negated_phrase_is_not_a_match() {
        let v = parse_choice("评论并不歧视女性，而是歧视男性");
        assert_eq!(v.label, Some(MenTargeted));
        assert_eq!(v.rule, ParseRule::OptionTextMatch);
    }

    #[test]
    fn conflicting_option_texts_fall_through() {
        let v = parse_choice("既有歧视女性的成分，也有歧视男性的成分");
        assert!(v.is_unparsed());
    }

    #[test]
    fn sole_letter() {
        let v = parse_choice("我倾向于C，因为评论暗示男性只是娱乐工具，这种说法贬低男性价值并且相当常见");
        assert_eq!(v.label, Some(MenTargeted));
        assert_eq!(v.rule, ParseRule::SoleLetter);
    }

    #[test]
    fn unparsed_cases() {
        for s in ["", "我无法判断这个评论。", "可能是a也可能是b", "DeepSeek GPT-4o"] {
            let v = parse_choice(s);
            assert!(v.is_unparsed(), "{s:?} parsed as {v:?}");
            assert_eq!(v.rule, ParseRule::None);
            assert!(v.evidence.is_empty());
        }
    }

    #[test]
    fn english_answer() {
        let v = parse_choice("4. The comment contains discrimination.\n5. Answer: b. women-targeted toxicity");
        assert_eq!(v.label, Some(WomenTargeted));
        assert_eq!(v.rule, ParseRule::LabeledAnswer);
    }

    #[test]
    fn chain_numbered_steps() {
        let t = extract_chain("前言\n1. 第一步\n2. 第二步\n继续\n3、第三步", 3);
        assert_eq!(t.steps.len(), 3);
        assert!(t.complete);
        assert_eq!(t.steps[1].text, "第二步\n继续");
        assert_eq!(t.steps[2].text, "第三步");
    }

    #[test]
    fn chain_unnumbered_prose() {
        let t = extract_chain("这是一段没有编号的分析。", 4);
        assert!(t.steps.is_empty());
        assert!(!t.complete);
    }

    #[test]
    fn chain_gap_is_incomplete() {
        let t = extract_chain("1. a\n2. b\n4. d", 4);
        assert_eq!(
            t.steps.iter().map(|s| s.index).collect::<Vec<_>>(),
            vec![1, 2, 4]
        );
        assert!(!t.complete);
        assert!(!extract_chain("1. a\n2. b\n4. d", 3).complete);
    }

    #[test]
    fn chain_variants() {
        let t = extract_chain("第一步：看词\n第二步：看意思\n步骤3：判断\n(4) 选择\n五、结束", 5);
        assert_eq!(
            t.steps.iter().map(|s| s.index).collect::<Vec<_>>(),
            vec![1, 2, 3, 4, 5]
        );
        assert_eq!(t.steps[0].text, "看词");
        assert_eq!(t.steps[3].text, "选择");
        assert!(t.complete);
    }

    #[test]
    fn chain_ignores_decimals_and_repeats() {
        let t = extract_chain("1. 开始\n3.5 不是编号\n1. 嵌套\n2. 结束", 2);
        assert_eq!(t.steps.len(), 2);
        assert!(t.steps[0].text.contains("嵌套"));
        assert!(t.complete);
    }
}
