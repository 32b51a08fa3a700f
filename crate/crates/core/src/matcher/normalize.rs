use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

/// Normalized token sequence: lowercase, alphanumeric-only tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    /// Space-joined form, used as the stored surface of a term.
    pub fn joined(&self) -> String {
        self.0.join(" ")
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.joined())
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().map(Into::into).collect())
    }
}

/// Characters deleted outright, fusing their neighbours ("C-reactive" -> "creactive").
fn is_joiner(c: char) -> bool {
    matches!(
        c,
        '-' | '\'' | '\u{2010}' | '\u{2011}' | '\u{2018}' | '\u{2019}' | '\u{02BC}'
    )
}

/// Streams the normalized tokens of `raw` into `f`, reusing `buf`.
///
/// Alphanumerics are lowercased and kept, joiners are deleted, and every other
/// character ends the current token.
pub fn for_each_token<F: FnMut(&str)>(raw: &str, buf: &mut String, mut f: F) {
    buf.clear();
    for c in raw.chars() {
        if c.is_alphanumeric() {
            if c.is_ascii() {
                buf.push(c.to_ascii_lowercase());
            } else {
                // lowercasing can emit combining marks; those are not token characters
                buf.extend(c.to_lowercase().filter(|l| l.is_alphanumeric()));
            }
        } else if !is_joiner(c) && !buf.is_empty() {
            f(buf);
            buf.clear();
        }
    }
    if !buf.is_empty() {
        f(buf);
        buf.clear();
    }
}

pub fn normalize_text(raw: &str) -> TokenSeq {
    let mut out = Vec::new();
    let mut buf = String::new();
    for_each_token(raw, &mut buf, |t| out.push(t.to_owned()));
    TokenSeq(out)
}

/// Like [`normalize_text`] for raw bytes. Invalid UTF-8 sequences are dropped;
/// the second value counts the dropped bytes.
pub fn normalize_bytes(raw: &[u8]) -> (TokenSeq, usize) {
    let (text, dropped) = decode_lossy_dropping(raw);
    (normalize_text(&text), dropped)
}

/// Decodes UTF-8, deleting invalid byte sequences instead of substituting U+FFFD.
pub fn decode_lossy_dropping(raw: &[u8]) -> (String, usize) {
    let mut text = String::with_capacity(raw.len());
    let mut dropped = 0;
    for chunk in raw.utf8_chunks() {
        text.push_str(chunk.valid());
        dropped += chunk.invalid().len();
    }
    (text, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        normalize_text(s).into_inner()
    }

    #[test]
    fn fuses_hyphenated_forms() {
        assert_eq!(toks("C-reactive protein (hs)"), ["creactive", "protein", "hs"]);
        assert_eq!(toks("e-cigarette user"), ["ecigarette", "user"]);
        assert_eq!(toks("3'UTR"), ["3utr"]);
        assert_eq!(toks("Alzheimer’s disease"), ["alzheimers", "disease"]);
    }

    #[test]
    fn empty_and_blank_inputs() {
        assert!(toks("").is_empty());
        assert!(toks("   \t ").is_empty());
        assert!(toks("--- () ;;").is_empty());
    }

    #[test]
    fn digits_stay_in_tokens() {
        assert_eq!(toks("H7N9 influenza, 2013."), ["h7n9", "influenza", "2013"]);
    }

    #[test]
    fn punctuation_splits() {
        assert_eq!(toks("a/b,c.d"), ["a", "b", "c", "d"]);
        assert_eq!(toks("Müller–Lyer"), ["müller", "lyer"]);
    }

    #[test]
    fn invalid_bytes_are_dropped() {
        let (seq, dropped) = normalize_bytes(b"fm\xffri scan");
        assert_eq!(dropped, 1);
        assert_eq!(seq.into_inner(), ["fmri", "scan"]);
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(s in "\\PC{0,60}") {
            let once = normalize_text(&s);
            let twice = normalize_text(&once.joined());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn tokens_are_clean(s in "\\PC{0,60}") {
            for t in normalize_text(&s).iter() {
                prop_assert!(!t.is_empty());
                prop_assert!(t.chars().all(char::is_alphanumeric));
            }
        }
    }
}
