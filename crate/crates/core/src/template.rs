//! Minimal `{name}` placeholder templates.
//!
//! Substitution is single-pass: values are inserted verbatim and never
//! re-scanned, so a comment that happens to contain `{context}` is safe.
//! `{{` and `}}` produce literal braces.

use std::collections::BTreeSet;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(source: &str) -> Result<Self> {
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut chars = source.char_indices().peekable();
        while let Some((pos, c)) = chars.next() {
            match c {
                '{' if chars.peek().map(|(_, n)| *n) == Some('{') => {
                    chars.next();
                    literal.push('{');
                }
                '}' if chars.peek().map(|(_, n)| *n) == Some('}') => {
                    chars.next();
                    literal.push('}');
                }
                '{' => {
                    let mut name = String::new();
                    let mut closed = false;
                    for (_, n) in chars.by_ref() {
                        if n == '}' {
                            closed = true;
                            break;
                        }
                        name.push(n);
                    }
                    let valid = !name.is_empty()
                        && name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_');
                    if !closed || !valid {
                        return Err(CoreError::UnterminatedPlaceholder(pos));
                    }
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Slot(name));
                }
                _ => literal.push(c),
            }
        }
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        Ok(Template { segments })
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(name) => Some(name.as_str()),
                Segment::Literal(_) => None,
            })
            .collect()
    }

    /// Every placeholder must be bound; extra bindings are ignored.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Slot(name) => {
                    let value = bindings
                        .iter()
                        .find(|(k, _)| k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| CoreError::UnboundPlaceholder(name.clone()))?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_once() {
        let t = Template::parse("'{context}' / '{comment}'").unwrap();
        let out = t
            .render(&[("context", "{comment}"), ("comment", "x")])
            .unwrap();
        assert_eq!(out, "'{comment}' / 'x'");
    }

    #[test]
    fn unbound_placeholder_is_an_error() {
        let t = Template::parse("{context} {missing}").unwrap();
        assert!(matches!(
            t.render(&[("context", "c")]),
            Err(CoreError::UnboundPlaceholder(name)) if name == "missing"
        ));
    }

    #[test]
    fn escapes_and_malformed() {
        let t = Template::parse("{{literal}} {a}").unwrap();
        assert_eq!(t.render(&[("a", "1")]).unwrap(), "{literal} 1");
        assert!(Template::parse("oops {unterminated").is_err());
        assert!(Template::parse("{bad name}").is_err());
        assert_eq!(
            Template::parse("{a}{b}{a}").unwrap().placeholders(),
            ["a", "b"].into_iter().collect()
        );
    }
}
