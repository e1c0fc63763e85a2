//! Text normalization shared by deduplication, hashing and matching.

use std::sync::OnceLock;

use regex::Regex;
use sha2::{Digest, Sha256};
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

/// NFC, drop non-whitespace control characters, collapse whitespace runs to
/// a single space, trim.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.nfc() {
        if c.is_whitespace() {
            pending_space = true;
            continue;
        }
        if c.is_control() {
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        out.push(c);
    }
    out
}

/// Compatibility fold used for case- and width-insensitive matching:
/// NFKC (full-width Latin and punctuation become ASCII) then lowercase.
pub fn fold(text: &str) -> String {
    text.nfkc().flat_map(char::to_lowercase).collect()
}

/// Content hash of a normalized (context, comment) pair, 16 hex digits.
pub fn pair_id(context: &str, comment: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(normalize(context).as_bytes());
    hasher.update([0u8]);
    hasher.update(normalize(comment).as_bytes());
    let digest = hasher.finalize();
    hex::encode(&digest[..8])
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Sticker and media placeholders as platforms render them: [图片], [doge], [笑哭]
    RE.get_or_init(|| Regex::new(r"\[[^\[\]\s]{1,10}\]").expect("placeholder regex"))
}

fn is_nonverbal_char(c: char) -> bool {
    use GeneralCategory::*;
    if c.is_whitespace() {
        return true;
    }
    matches!(
        get_general_category(c),
        OtherSymbol
            | ModifierSymbol
            | MathSymbol
            | CurrencySymbol
            | Format
            | NonspacingMark
            | EnclosingMark
            | PrivateUse
            | ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
    )
}

/// True when a comment carries no verbal content: once image/sticker
/// placeholders are removed, every remaining codepoint is an emoji, symbol,
/// punctuation mark, joiner/selector or whitespace.
pub fn is_nonverbal(text: &str) -> bool {
    let stripped = placeholder_re().replace_all(text, " ");
    stripped.chars().all(is_nonverbal_char)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapses_whitespace_and_trims() {
        assert_eq!(normalize("  a \t\n b　c  "), "a b c");
        assert_eq!(normalize("x\u{0007}y"), "xy");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn nfc_composes() {
        assert_eq!(normalize("e\u{0301}"), "\u{00e9}");
        assert_eq!(pair_id("e\u{0301}", "x"), pair_id("\u{00e9}", "x"));
    }

    #[test]
    fn pair_id_separates_fields() {
        assert_ne!(pair_id("ab", "c"), pair_id("a", "bc"));
        assert_eq!(pair_id(" a  b ", "c"), pair_id("a b", "c"));
        assert_eq!(pair_id("a", "b").len(), 16);
    }

    #[test]
    fn fold_handles_full_width() {
        assert_eq!(fold("ＣＮＭ"), "cnm");
        assert_eq!(fold("答案：Ｃ"), "答案:c");
    }

    #[test]
    fn emoji_only_is_nonverbal() {
        assert!(is_nonverbal("😂😂😂"));
        assert!(is_nonverbal("👍🏻 ❤️"));
        assert!(is_nonverbal("👨‍👩‍👧"));
        assert!(is_nonverbal("[图片]"));
        assert!(is_nonverbal("[doge][doge] 😅！"));
        assert!(is_nonverbal("🇨🇳"));
    }

    #[test]
    fn text_is_verbal() {
        assert!(!is_nonverbal("哈哈哈😂"));
        assert!(!is_nonverbal("ok"));
        assert!(!is_nonverbal("[图片] 好看"));
        assert!(!is_nonverbal("985"));
    }
}
