//! The four-way toxicity verdict and its answer-option letters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CoreError;

/// Classification verdict for one context–comment pair.
///
/// The letter order is fixed by the answer options of the zero-shot prompt:
/// `A` non-toxic, `B` women-targeted, `C` men-targeted, `D` anti-toxic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ToxicityLabel {
    NonToxic,
    WomenTargeted,
    MenTargeted,
    AntiToxic,
}

impl ToxicityLabel {
    pub const ALL: [ToxicityLabel; 4] = [
        ToxicityLabel::NonToxic,
        ToxicityLabel::WomenTargeted,
        ToxicityLabel::MenTargeted,
        ToxicityLabel::AntiToxic,
    ];

    pub fn letter(self) -> char {
        match self {
            ToxicityLabel::NonToxic => 'A',
            ToxicityLabel::WomenTargeted => 'B',
            ToxicityLabel::MenTargeted => 'C',
            ToxicityLabel::AntiToxic => 'D',
        }
    }

    /// Accepts `A`–`D` in either case.
    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(ToxicityLabel::NonToxic),
            'B' => Some(ToxicityLabel::WomenTargeted),
            'C' => Some(ToxicityLabel::MenTargeted),
            'D' => Some(ToxicityLabel::AntiToxic),
            _ => None,
        }
    }

    /// Option phrase as it appears in the prompt's answer list.
    pub fn option_text(self) -> &'static str {
        match self {
            ToxicityLabel::NonToxic => "不存在歧视",
            ToxicityLabel::WomenTargeted => "歧视女性",
            ToxicityLabel::MenTargeted => "歧视男性",
            ToxicityLabel::AntiToxic => "反对歧视",
        }
    }

    pub fn english_name(self) -> &'static str {
        match self {
            ToxicityLabel::NonToxic => "non-toxic",
            ToxicityLabel::WomenTargeted => "women-targeted toxicity",
            ToxicityLabel::MenTargeted => "men-targeted toxicity",
            ToxicityLabel::AntiToxic => "anti-toxicity",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_toxic(self) -> bool {
        matches!(
            self,
            ToxicityLabel::WomenTargeted | ToxicityLabel::MenTargeted
        )
    }
}

impl fmt::Display for ToxicityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for ToxicityLabel {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let mut chars = t.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if let Some(label) = ToxicityLabel::from_letter(c) {
                return Ok(label);
            }
        }
        match t {
            "NonToxic" => Ok(ToxicityLabel::NonToxic),
            "WomenTargeted" => Ok(ToxicityLabel::WomenTargeted),
            "MenTargeted" => Ok(ToxicityLabel::MenTargeted),
            "AntiToxic" => Ok(ToxicityLabel::AntiToxic),
            _ => Err(CoreError::InvalidLabel(s.to_string())),
        }
    }
}

// Records store the letter, which keeps corpus files short and diffable.
impl Serialize for ToxicityLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut buf = [0u8; 4];
        serializer.serialize_str(self.letter().encode_utf8(&mut buf))
    }
}

impl<'de> Deserialize<'de> for ToxicityLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
