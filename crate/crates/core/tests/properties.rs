use pic_core::corpus::{
    build_pairs, resolve_agreement, Agreement, AnnotatorLabel, ContextCommentPair, FilterConfig,
    Platform,
};
use pic_core::metrics::{accuracy, EvalReport, Percent};
use pic_core::parsing::{parse_choice, ChainTrace, ParseRule, ParsedVerdict};
use pic_core::promptkit::{ChainStep, InferenceChainExemplar, PromptKit, PromptMethod, TemplateSet};
use pic_core::records::{RunRecord, TokenUsage};
use pic_core::text::pair_id;
use pic_core::ToxicityLabel;
use proptest::prelude::*;

fn label() -> impl Strategy<Value = ToxicityLabel> {
    prop::sample::select(ToxicityLabel::ALL.to_vec())
}

fn response_text() -> impl Strategy<Value = String> {
    prop_oneof![
        any::<String>(),
        "[abcdABCD .:：、()\\n答案选项是歧视女性男性不存在反对]{0,40}",
        "(答案|选项|answer)[：: ]{0,2}[a-fA-F]{1,2}.{0,20}",
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn parse_choice_is_total(s in response_text()) {
        let v = parse_choice(&s);
        prop_assert_eq!(v.label.is_none(), v.rule == ParseRule::None);
        prop_assert_eq!(v.label.is_none(), v.evidence.is_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn build_pairs_is_idempotent(
        rows in prop::collection::vec(("[ab甲乙 ]{1,4}", "[xy丙丁😂 \\[\\]图片]{1,5}"), 0..30)
    ) {
        let pairs: Vec<ContextCommentPair> = rows
            .iter()
            .map(|(c, m)| ContextCommentPair::new(c, m, "彩礼", Platform::Weibo))
            .collect();
        let cfg = FilterConfig::default();
        let (once, _) = build_pairs(&pairs, &cfg);
        let (twice, report) = build_pairs(&once, &cfg);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(report.input, report.output);
    }

    #[test]
    fn retained_plus_disagreed_equals_labeled(
        votes in prop::collection::vec((label(), label()), 0..200)
    ) {
        let mut full = 0;
        let mut disagree = 0;
        for (i, (a, b)) in votes.iter().enumerate() {
            let pair = ContextCommentPair::new(&format!("语境{i}"), "评论", "彩礼", Platform::Weibo);
            let labels = vec![
                AnnotatorLabel { annotator: "ann1".into(), label: *a },
                AnnotatorLabel { annotator: "ann2".into(), label: *b },
            ];
            let ap = resolve_agreement(pair, labels, 2).unwrap();
            ap.validate().unwrap();
            match ap.agreement {
                Agreement::Full => {
                    prop_assert_eq!(ap.final_label, Some(*a));
                    full += 1;
                }
                Agreement::Disagree => {
                    prop_assert!(ap.final_label.is_none());
                    disagree += 1;
                }
            }
        }
        prop_assert_eq!(full + disagree, votes.len());
    }

    #[test]
    fn ablation_sections_are_prefixes(
        steps in prop::collection::vec(prop::collection::vec("[\\p{Han}a-z，。]{1,12}", 1..3), 6),
        answer in label(),
    ) {
        let (context, comment) = ("帖子内容", "评论内容");
        let ex = InferenceChainExemplar {
            pair_id: pair_id(context, comment),
            context: context.into(),
            comment: comment.into(),
            steps: steps.into_iter().map(ChainStep).collect(),
            final_answer: answer,
            author: "ann1".into(),
        };
        let kit = PromptKit::new(TemplateSet::bundled());
        let mut previous = String::new();
        for k in 1..=6 {
            let section = kit.ablation_section(k, &ex).unwrap();
            prop_assert!(section.starts_with(&previous));
            previous = section;
        }
    }

    #[test]
    fn accuracy_ignores_record_order(
        outcomes in prop::collection::vec((label(), prop::option::of(label())), 1..80),
        seed in any::<u64>(),
    ) {
        let records: Vec<RunRecord> = outcomes
            .iter()
            .enumerate()
            .map(|(i, (gold, pred))| record(i, *gold, *pred))
            .collect();
        let mut shuffled = records.clone();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(accuracy(&records).unwrap(), accuracy(&shuffled).unwrap());
        prop_assert_eq!(
            EvalReport::from_records(&records).unwrap(),
            EvalReport::from_records(&shuffled).unwrap()
        );
        let correct = outcomes.iter().filter(|(g, p)| Some(*g) == *p).count() as i64;
        let oracle = (correct * 20_000 / n as i64 + 1) / 2;
        prop_assert_eq!(accuracy(&records).unwrap(), Percent(oracle));
    }
}

fn record(i: usize, gold: ToxicityLabel, pred: Option<ToxicityLabel>) -> RunRecord {
    RunRecord {
        pair_id: format!("{i:016x}"),
        model_name: "m".into(),
        method: PromptMethod::ZeroShot,
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
