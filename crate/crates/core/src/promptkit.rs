//! Prompt rendering for the baseline methods, the three PIC variants and
//! the cumulative six-step ablation family.
//!
//! Prompt wording lives in template files (see `templates/`); the bundled
//! set is compiled in, and [`TemplateSet::load_dir`] overrides any subset of
//! files at runtime.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::ContextCommentPair;
use crate::error::{CoreError, Result};
use crate::jsonl::{self, FileHeader};
use crate::label::ToxicityLabel;
use crate::template::Template;
use crate::text;

pub const EXEMPLARS_SCHEMA: &str = "pic.exemplars";

/// Number of relevance-theoretic steps in a full inference chain.
pub const CHAIN_STEPS: usize = 6;

/// Default shot count for `PicStepsPlusShots`.
pub const DEFAULT_SHOTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptMethod {
    ZeroShot,
    CoT,
    PicOneShot,
    PicStepInstructions,
    PicStepsPlusShots(usize),
    AblationCumulative(usize),
}

impl PromptMethod {
    /// The five methods compared in the main results table.
    pub const MAIN: [PromptMethod; 5] = [
        PromptMethod::ZeroShot,
        PromptMethod::CoT,
        PromptMethod::PicOneShot,
        PromptMethod::PicStepInstructions,
        PromptMethod::PicStepsPlusShots(DEFAULT_SHOTS),
    ];

    fn ordinal(self) -> (u8, usize) {
        match self {
            PromptMethod::ZeroShot => (0, 0),
            PromptMethod::CoT => (1, 0),
            PromptMethod::PicOneShot => (2, 0),
            PromptMethod::PicStepInstructions => (3, 0),
            PromptMethod::PicStepsPlusShots(k) => (4, k),
            PromptMethod::AblationCumulative(k) => (5, k),
        }
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            PromptMethod::AblationCumulative(k) if !(1..=CHAIN_STEPS).contains(&k) => {
                Err(CoreError::InvalidAblationStep(k))
            }
            PromptMethod::PicStepsPlusShots(0) => Err(CoreError::InvalidMethod(self.to_string())),
            m => Ok(m),
        }
    }

    /// How many exemplars rendering needs.
    pub fn exemplars_needed(self) -> usize {
        match self {
            PromptMethod::ZeroShot | PromptMethod::CoT | PromptMethod::PicStepInstructions => 0,
            PromptMethod::PicOneShot | PromptMethod::AblationCumulative(_) => 1,
            PromptMethod::PicStepsPlusShots(k) => k,
        }
    }

    /// Position on the ablation curve: 0 for zero-shot, k for step k.
    pub fn ablation_step(self) -> Option<usize> {
        match self {
            PromptMethod::ZeroShot => Some(0),
            PromptMethod::AblationCumulative(k) => Some(k),
            _ => None,
        }
    }

    pub fn display_name(self) -> String {
        match self {
            PromptMethod::ZeroShot => "Zero-shot".into(),
            PromptMethod::CoT => "CoT".into(),
            PromptMethod::PicOneShot => "PIC one shot".into(),
            PromptMethod::PicStepInstructions => "PIC step instructions".into(),
            PromptMethod::PicStepsPlusShots(k) => format!("PIC step instructions + {k} shots"),
            PromptMethod::AblationCumulative(k) => format!("Ablation steps 1-{k}"),
        }
    }
}

impl PartialOrd for PromptMethod {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PromptMethod {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ordinal().cmp(&other.ordinal())
    }
}

impl fmt::Display for PromptMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptMethod::ZeroShot => f.write_str("zero_shot"),
            PromptMethod::CoT => f.write_str("cot"),
            PromptMethod::PicOneShot => f.write_str("pic_one_shot"),
            PromptMethod::PicStepInstructions => f.write_str("pic_step_instructions"),
            PromptMethod::PicStepsPlusShots(k) => write!(f, "pic_steps_plus_shots:{k}"),
            PromptMethod::AblationCumulative(k) => write!(f, "ablation:{k}"),
        }
    }
}

impl FromStr for PromptMethod {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CoreError::InvalidMethod(s.to_string());
        let (name, arg) = match s.trim().split_once(':') {
            Some((n, a)) => (n, Some(a.parse::<usize>().map_err(|_| bad())?)),
            None => (s.trim(), None),
        };
        let method = match (name, arg) {
            ("zero_shot", None) => PromptMethod::ZeroShot,
            ("cot", None) => PromptMethod::CoT,
            ("pic_one_shot", None) => PromptMethod::PicOneShot,
            ("pic_step_instructions", None) => PromptMethod::PicStepInstructions,
            ("pic_steps_plus_shots", k) => PromptMethod::PicStepsPlusShots(k.unwrap_or(DEFAULT_SHOTS)),
            ("ablation", Some(k)) => PromptMethod::AblationCumulative(k),
            _ => return Err(bad()),
        };
        method.validate()
    }
}

impl Serialize for PromptMethod {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PromptMethod {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One step of an inference chain. A step may hold several layered entries
/// (e.g. more than one linguistic cue); an empty step is absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChainStep(pub Vec<String>);

impl ChainStep {
    pub fn single(text: impl Into<String>) -> Self {
        ChainStep(vec![text.into()])
    }

    pub fn is_present(&self) -> bool {
        self.0.iter().any(|e| !e.trim().is_empty())
    }

    /// Layered entries are numbered inline: `（1）…；（2）…`.
    pub fn render(&self) -> String {
        let entries: Vec<&str> = self
            .0
            .iter()
            .map(|e| e.trim())
            .filter(|e| !e.is_empty())
            .collect();
        match entries.as_slice() {
            [single] => (*single).to_string(),
            many => many
                .iter()
                .enumerate()
                .map(|(i, e)| format!("（{}）{}", i + 1, e))
                .collect::<Vec<_>>()
                .join("；"),
        }
    }
}

/// A manually written six-step inference trace for one pair.
///
/// The pair's texts travel with the exemplar so that exemplar files are
/// self-contained prompt material.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceChainExemplar {
    pub pair_id: String,
    pub context: String,
    pub comment: String,
    pub steps: Vec<ChainStep>,
    pub final_answer: ToxicityLabel,
    pub author: String,
}

impl InferenceChainExemplar {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(CoreError::InvalidExemplar {
                pair_id: self.pair_id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.steps.len() != CHAIN_STEPS {
            return fail(&format!("has {} step slots, expected 6", self.steps.len()));
        }
        if text::pair_id(&self.context, &self.comment) != self.pair_id {
            return fail("pair_id does not match the context/comment hash");
        }
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.steps.len() == CHAIN_STEPS && self.steps.iter().all(ChainStep::is_present)
    }

    fn step_text(&self, step: usize) -> Result<String> {
        match self.steps.get(step - 1) {
            Some(s) if s.is_present() => Ok(s.render()),
            _ => Err(CoreError::InvalidExemplar {
                pair_id: self.pair_id.clone(),
                reason: format!("step {step} is empty"),
            }),
        }
    }
}

pub fn load_exemplars(path: &Path) -> Result<Vec<InferenceChainExemplar>> {
    let (_, exemplars) = jsonl::read_records::<InferenceChainExemplar>(path)?;
    for e in &exemplars {
        e.validate()?;
    }
    Ok(exemplars)
}

pub fn write_exemplars(path: &Path, exemplars: &[InferenceChainExemplar]) -> Result<()> {
    jsonl::write_records(path, Some(&FileHeader::new(EXEMPLARS_SCHEMA)), exemplars)
}

/// Choose `k` shots for `target`: the explicit id list when given, otherwise
/// the pool in ascending `pair_id` order. An exemplar written for the target
/// pair itself is never used as a shot.
pub fn select_shots<'a>(
    pool: &'a [InferenceChainExemplar],
    target_pair_id: &str,
    k: usize,
    explicit_ids: Option<&[String]>,
) -> Vec<&'a InferenceChainExemplar> {
    let mut candidates: Vec<&InferenceChainExemplar> = match explicit_ids {
        Some(ids) => ids
            .iter()
            .filter_map(|id| pool.iter().find(|e| &e.pair_id == id))
            .collect(),
        None => {
            let mut all: Vec<_> = pool.iter().collect();
            all.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
            all
        }
    };
    candidates.retain(|e| e.pair_id != target_pair_id);
    candidates.truncate(k);
    candidates
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub method: PromptMethod,
    pub messages: Vec<Message>,
    pub prompt_hash: String,
}

impl RenderedPrompt {
    pub fn user(method: PromptMethod, content: String) -> Self {
        let messages = vec![Message {
            role: Role::User,
            content,
        }];
        let prompt_hash = prompt_hash(&messages);
        RenderedPrompt {
            method,
            messages,
            prompt_hash,
        }
    }

    /// Concatenated message contents; for single-message prompts this is
    /// exactly the prompt text.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Canonical form: compact JSON array of `{"role":..,"content":..}` objects.
pub fn canonical_bytes(messages: &[Message]) -> Vec<u8> {
    serde_json::to_vec(messages).expect("messages serialize")
}

/// SHA-256 of the canonical message serialization, lowercase hex.
pub fn prompt_hash(messages: &[Message]) -> String {
    text::sha256_hex(&canonical_bytes(messages))
}

macro_rules! bundled {
    ($($field:ident => $file:literal),* $(,)?) => {
        /// Parsed prompt templates.
        #[derive(Debug, Clone)]
        pub struct TemplateSet {
            $(pub $field: Template,)*
            pub step_names: Vec<String>,
        }

        impl TemplateSet {
            pub fn bundled() -> Self {
                TemplateSet {
                    $($field: Template::parse(trim_file(include_str!(concat!("../templates/", $file))))
                        .expect(concat!("bundled template ", $file)),)*
                    step_names: parse_step_names(include_str!("../templates/step_names.txt")),
                }
            }

            /// Load templates from `dir`; files that are absent keep the
            /// bundled wording.
            pub fn load_dir(dir: &Path) -> Result<Self> {
                if !dir.is_dir() {
                    return Err(CoreError::MissingTemplate { path: dir.to_path_buf() });
                }
                let mut set = Self::bundled();
                $(
                    let path = dir.join($file);
                    if path.exists() {
                        let s = std::fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
                        set.$field = Template::parse(trim_file(&s))?;
                    }
                )*
                let names = dir.join("step_names.txt");
                if names.exists() {
                    let s = std::fs::read_to_string(&names).map_err(|e| CoreError::io(&names, e))?;
                    set.step_names = parse_step_names(&s);
                }
                if set.step_names.len() != CHAIN_STEPS {
                    return Err(CoreError::InvalidMethod(format!(
                        "step_names.txt lists {} names, expected 6",
                        set.step_names.len()
                    )));
                }
                Ok(set)
            }
        }
    };
}

bundled! {
    zero_shot => "zero_shot.txt",
    cot => "cot.txt",
    pic_step_instructions => "pic_step_instructions.txt",
    pic_one_shot => "pic_one_shot.txt",
    pic_steps_plus_shots => "pic_steps_plus_shots.txt",
    shot => "shot.txt",
    answer => "answer.txt",
    ablation => "ablation.txt",
    ablation_step => "ablation_step.txt",
    ablation_answer => "ablation_answer.txt",
}

/// Template files end with one newline that is not part of the prompt.
fn trim_file(s: &str) -> &str {
    s.strip_suffix('\n')
        .map(|t| t.strip_suffix('\r').unwrap_or(t))
        .unwrap_or(s)
}

fn parse_step_names(s: &str) -> Vec<String> {
    s.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::bundled()
    }
}

/// Stateless renderer over a template set.
#[derive(Debug, Clone, Default)]
pub struct PromptKit {
    templates: TemplateSet,
}

impl PromptKit {
    pub fn new(templates: TemplateSet) -> Self {
        PromptKit { templates }
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    fn zero_shot_body(&self, pair: &ContextCommentPair) -> Result<String> {
        if pair.context.trim().is_empty() || pair.comment.trim().is_empty() {
            return Err(CoreError::InvalidExemplar {
                pair_id: pair.pair_id.clone(),
                reason: "context and comment must be non-empty".into(),
            });
        }
        self.templates
            .zero_shot
            .render(&[("context", &pair.context), ("comment", &pair.comment)])
    }

    fn step_instructions_body(&self, pair: &ContextCommentPair) -> Result<String> {
        let zero = self.zero_shot_body(pair)?;
        self.templates
            .pic_step_instructions
            .render(&[("zero_shot", &zero)])
    }

    /// `b.歧视女性` style answer line.
    pub fn answer_text(&self, label: ToxicityLabel) -> Result<String> {
        let letter = label.letter().to_ascii_lowercase().to_string();
        self.templates
            .answer
            .render(&[("letter", &letter), ("option", label.option_text())])
    }

    /// One exemplar in PIC form: chain steps 3–6 renumbered 1–4, then the
    /// answer as step 5.
    fn render_shot(&self, ex: &InferenceChainExemplar) -> Result<String> {
        ex.validate()?;
        let answer = self.answer_text(ex.final_answer)?;
        let (s3, s4, s5, s6) = (
            ex.step_text(3)?,
            ex.step_text(4)?,
            ex.step_text(5)?,
            ex.step_text(6)?,
        );
        self.templates.shot.render(&[
            ("context", &ex.context),
            ("comment", &ex.comment),
            ("step3", &s3),
            ("step4", &s4),
            ("step5", &s5),
            ("step6", &s6),
            ("answer", &answer),
        ])
    }

    fn render_shots(&self, shots: &[&InferenceChainExemplar]) -> Result<String> {
        let rendered = shots
            .iter()
            .map(|ex| self.render_shot(ex))
            .collect::<Result<Vec<_>>>()?;
        Ok(rendered.join("\n\n"))
    }

    pub fn render_zero_shot(&self, pair: &ContextCommentPair) -> Result<RenderedPrompt> {
        Ok(RenderedPrompt::user(
            PromptMethod::ZeroShot,
            self.zero_shot_body(pair)?,
        ))
    }

    pub fn render_cot(&self, pair: &ContextCommentPair) -> Result<RenderedPrompt> {
        let zero = self.zero_shot_body(pair)?;
        let body = self.templates.cot.render(&[("zero_shot", &zero)])?;
        Ok(RenderedPrompt::user(PromptMethod::CoT, body))
    }

    /// Render one of the three PIC variants. `exemplars` are used in the
    /// order given; see [`select_shots`].
    pub fn render_pic(
        &self,
        method: PromptMethod,
        pair: &ContextCommentPair,
        exemplars: &[&InferenceChainExemplar],
    ) -> Result<RenderedPrompt> {
        let needed = method.exemplars_needed();
        if exemplars.len() < needed {
            return Err(CoreError::InsufficientExemplars {
                method: method.to_string(),
                needed,
                available: exemplars.len(),
            });
        }
        let body = match method.validate()? {
            PromptMethod::PicStepInstructions => self.step_instructions_body(pair)?,
            PromptMethod::PicOneShot => {
                let zero = self.zero_shot_body(pair)?;
                let shots = self.render_shots(&exemplars[..1])?;
                self.templates
                    .pic_one_shot
                    .render(&[("zero_shot", &zero), ("shots", &shots)])?
            }
            PromptMethod::PicStepsPlusShots(k) => {
                let steps = self.step_instructions_body(pair)?;
                let shots = self.render_shots(&exemplars[..k])?;
                self.templates
                    .pic_steps_plus_shots
                    .render(&[("step_instructions", &steps), ("shots", &shots)])?
            }
            other => return Err(CoreError::InvalidMethod(other.to_string())),
        };
        Ok(RenderedPrompt::user(method, body))
    }

    /// The exemplar section of an ablation prompt: steps 1..=k, plus the
    /// final answer when k = 6. Section(k-1) is always a prefix of
    /// section(k).
    pub fn ablation_section(&self, k: usize, exemplar: &InferenceChainExemplar) -> Result<String> {
        if !(1..=CHAIN_STEPS).contains(&k) {
            return Err(CoreError::InvalidAblationStep(k));
        }
        exemplar.validate()?;
        if !exemplar.is_complete() {
            return Err(CoreError::InvalidExemplar {
                pair_id: exemplar.pair_id.clone(),
                reason: "ablation needs all six steps".into(),
            });
        }
        let mut lines = Vec::with_capacity(k + 1);
        for step in 1..=k {
            let index = step.to_string();
            let text = exemplar.step_text(step)?;
            lines.push(self.templates.ablation_step.render(&[
                ("index", &index),
                ("name", &self.templates.step_names[step - 1]),
                ("text", &text),
            ])?);
        }
        if k == CHAIN_STEPS {
            let answer = self.answer_text(exemplar.final_answer)?;
            lines.push(
                self.templates
                    .ablation_answer
                    .render(&[("answer", &answer)])?,
            );
        }
        Ok(lines.join("\n"))
    }

    pub fn render_ablation(
        &self,
        k: usize,
        pair: &ContextCommentPair,
        exemplar: &InferenceChainExemplar,
    ) -> Result<RenderedPrompt> {
        let steps = self.ablation_section(k, exemplar)?;
        let zero = self.zero_shot_body(pair)?;
        let body = self
            .templates
            .ablation
            .render(&[("zero_shot", &zero), ("steps", &steps)])?;
        Ok(RenderedPrompt::user(PromptMethod::AblationCumulative(k), body))
    }

    /// Dispatch on `method`. For ablation, `exemplars[0]` is the chain
    /// whose steps are embedded.
    pub fn render(
        &self,
        method: PromptMethod,
        pair: &ContextCommentPair,
        exemplars: &[&InferenceChainExemplar],
    ) -> Result<RenderedPrompt> {
        match method.validate()? {
            PromptMethod::ZeroShot => self.render_zero_shot(pair),
            PromptMethod::CoT => self.render_cot(pair),
            PromptMethod::AblationCumulative(k) => {
                let ex = exemplars.first().ok_or(CoreError::InsufficientExemplars {
                    method: method.to_string(),
                    needed: 1,
                    available: 0,
                })?;
                self.render_ablation(k, pair, ex)
            }
            m => self.render_pic(m, pair, exemplars),
        }
    }
}

/// The five step-instruction strings, in order, as they must appear in
/// every step-instruction prompt.
pub const STEP_INSTRUCTIONS: [&str; 5] = [
    "用普通人能听懂的语言，解释评论中的比喻和有特殊含义的词，例如，娘炮，娇妻。",
    "用普通人能听懂的语言，解释评论的字面意思。",
    "找出评论的含义中与性别平等原则相违背之处。如果没有相悖之处，请回答“没有”。",
    "判断该评论是否含有性别歧视。",
    "回答选项",
];
