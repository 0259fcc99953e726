//! Tokenization, sentence segmentation and n-gram extraction.
//!
//! Every function here is pure and deterministic. The same [`TokenizerConfig`]
//! must be used when building an index and when querying it; the config is
//! persisted in the index metadata and checked on open.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Highest n-gram order handled anywhere in the toolkit.
pub const MAX_ORDER: usize = 3;

/// All supported n-gram orders, in ascending order.
pub const ORDERS: [usize; MAX_ORDER] = [1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub strip_punct: bool,
    pub unicode_nfc: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punct: true,
            unicode_nfc: true,
        }
    }
}

/// Normalizes raw text the way stored text is kept: NFC when configured.
pub fn normalize_text<'a>(text: &'a str, cfg: &TokenizerConfig) -> Cow<'a, str> {
    if cfg.unicode_nfc && !is_nfc_quick(text) {
        Cow::Owned(text.nfc().collect())
    } else {
        Cow::Borrowed(text)
    }
}

fn is_nfc_quick(text: &str) -> bool {
    matches!(
        unicode_normalization::is_nfc_quick(text.chars()),
        unicode_normalization::IsNormalized::Yes
    )
}

/// Splits `text` into tokens.
///
/// Tokens are whitespace-separated runs with leading and trailing
/// punctuation detached. Internal punctuation is kept (`u.s.`, `o'neil`,
/// `3.14`), and a dotted abbreviation keeps its final period. With
/// `strip_punct` the detached punctuation is dropped, otherwise every
/// detached character becomes its own token.
pub fn tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    let mut buf: Cow<'_, str> = Cow::Borrowed(text);
    if cfg.lowercase {
        buf = Cow::Owned(buf.to_lowercase());
    }
    if cfg.unicode_nfc && !is_nfc_quick(&buf) {
        buf = Cow::Owned(buf.nfc().collect());
    }

    let mut tokens = Vec::new();
    for raw in buf.split_whitespace() {
        let Some(core_start) = raw.find(|c: char| c.is_alphanumeric()) else {
            if !cfg.strip_punct {
                tokens.extend(raw.chars().map(String::from));
            }
            continue;
        };
        let core_end = raw
            .char_indices()
            .rev()
            .find(|&(_, c)| c.is_alphanumeric())
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(raw.len());

        let lead = &raw[..core_start];
        let mut core = raw[core_start..core_end].to_string();
        let mut trail = &raw[core_end..];
        if trail.starts_with('.') && is_dotted_abbreviation(&core) {
            core.push('.');
            trail = &trail[1..];
        }

        if !cfg.strip_punct {
            tokens.extend(lead.chars().map(String::from));
        }
        tokens.push(core);
        if !cfg.strip_punct {
            tokens.extend(trail.chars().map(String::from));
        }
    }
    tokens
}

/// `u.s`, `e.g`, `a.m`: single letters joined by periods.
fn is_dotted_abbreviation(core: &str) -> bool {
    let mut parts = 0;
    for part in core.split('.') {
        let mut chars = part.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_alphabetic() => parts += 1,
            _ => return false,
        }
    }
    parts >= 2
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "e.g", "i.e", "inc", "ltd", "co", "corp", "no",
    "gen", "col", "lt", "sgt", "capt", "rev", "hon", "gov", "sen", "rep", "fig", "jan", "feb", "aug", "sept", "oct",
    "nov", "dec", "approx", "dept", "est", "ca", "cf", "al", "op", "vol", "pp",
];

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '\u{201D}' | '\u{2019}' | '\u{00BB}')
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Byte ranges of the sentences in `text`, trimmed of surrounding whitespace.
///
/// A boundary is a run of `.`, `!` or `?` (optionally followed by closing
/// quotes or brackets), then whitespace, then an uppercase letter or a
/// digit. A period ending a stoplisted abbreviation is not a boundary.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let mut spans = Vec::new();

    let mut start = match chars.iter().position(|&(_, c)| !c.is_whitespace()) {
        Some(p) => p,
        None => return spans,
    };

    let mut i = start;
    while i < n {
        let (_, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n && (is_terminal(chars[j + 1].1) || is_closing(chars[j + 1].1)) {
            j += 1;
        }
        let mut k = j + 1;
        if k >= n || !chars[k].1.is_whitespace() {
            i = j + 1;
            continue;
        }
        while k < n && chars[k].1.is_whitespace() {
            k += 1;
        }
        if k >= n {
            break;
        }
        let next = chars[k].1;
        let opens_sentence = next.is_uppercase() || next.is_numeric();
        if opens_sentence && !(c == '.' && ends_with_abbreviation(&chars[start..i])) {
            let end = chars[j].0 + chars[j].1.len_utf8();
            spans.push(chars[start].0..end);
            start = k;
        }
        i = k;
    }

    let end = text.trim_end().len();
    if chars[start].0 < end {
        spans.push(chars[start].0..end);
    }
    spans
}

fn ends_with_abbreviation(before: &[(usize, char)]) -> bool {
    let word: String = before
        .iter()
        .rev()
        .take_while(|&&(_, c)| !c.is_whitespace())
        .map(|&(_, c)| c)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .skip_while(|c| !c.is_alphanumeric())
        .collect();
    if word.is_empty() {
        return false;
    }
    let word = word.to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Sentence strings of `text`; see [`sentence_spans`].
pub fn split_sentences(text: &str) -> Vec<&str> {
    sentence_spans(text).into_iter().map(|r| &text[r]).collect()
}

/// A contiguous run of 1 to 3 lowercased tokens.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NGram {
    terms: Vec<String>,
}

impl NGram {
    pub fn new(terms: Vec<String>) -> Result<Self> {
        check_order(terms.len())?;
        Ok(Self { terms })
    }

    pub fn order(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// Dictionary key: the terms joined by single spaces. Tokens never
    /// contain whitespace, so the key is unambiguous within one order.
    pub fn key(&self) -> String {
        self.terms.join(" ")
    }
}

impl fmt::Display for NGram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

pub(crate) fn check_order(order: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&order) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "n-gram order must be in 1..={MAX_ORDER}, got {order}"
        )))
    }
}

/// Number of `order`-grams in a sequence of `len` tokens.
pub fn ngram_count(len: usize, order: usize) -> usize {
    (len + 1).saturating_sub(order)
}

/// All contiguous windows of length `order`, counted with multiplicity.
pub fn extract_ngrams<S: AsRef<str>>(tokens: &[S], order: usize) -> Result<BTreeMap<NGram, u32>> {
    check_order(order)?;
    let mut out = BTreeMap::new();
    if tokens.len() < order {
        return Ok(out);
    }
    for window in tokens.windows(order) {
        let gram = NGram {
            terms: window.iter().map(|t| t.as_ref().to_string()).collect(),
        };
        *out.entry(gram).or_insert(0) += 1;
    }
    Ok(out)
}

/// Space-joined n-gram keys with counts; the form stored in the index.
pub(crate) fn ngram_keys<S: AsRef<str>>(tokens: &[S], order: usize) -> BTreeMap<String, u32> {
    let mut out = BTreeMap::new();
    if tokens.len() < order {
        return out;
    }
    let mut key = String::new();
    for window in tokens.windows(order) {
        key.clear();
        for (i, t) in window.iter().enumerate() {
            if i > 0 {
                key.push(' ');
            }
            key.push_str(t.as_ref());
        }
        match out.get_mut(key.as_str()) {
            Some(c) => *c += 1,
            None => {
                out.insert(key.clone(), 1);
            }
        }
    }
    out
}
