//! Corpus-neutral domain types shared by every other module.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{self, TokenizerConfig};

/// Tolerance used for the weight-sum and weighted-score identities.
pub const WEIGHT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub sent_index: u32,
    pub text: String,
    pub tokens: Vec<String>,
}

/// One blank-line-separated block of an article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub doc_id: String,
    pub para_index: u32,
    pub title: String,
    pub text: String,
    pub sentences: Vec<Sentence>,
}

impl Paragraph {
    /// Segments and tokenizes `text`. Fails when the text is blank.
    pub fn from_text(
        doc_id: impl Into<String>,
        para_index: u32,
        title: impl Into<String>,
        text: &str,
        cfg: &TokenizerConfig,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        let text = text::normalize_text(text.trim(), cfg).into_owned();
        if text.is_empty() {
            return Err(Error::invalid(format!(
                "paragraph ({doc_id}, {para_index}) has no text"
            )));
        }
        let sentences = text::split_sentences(&text)
            .into_iter()
            .enumerate()
            .map(|(i, s)| Sentence {
                sent_index: i as u32,
                text: s.to_string(),
                tokens: text::tokenize(s, cfg),
            })
            .collect();
        Ok(Self {
            doc_id,
            para_index,
            title: title.into(),
            text,
            sentences,
        })
    }

    /// Paragraph token stream: the concatenation of its sentences' tokens.
    pub fn tokens(&self) -> impl Iterator<Item = &String> + '_ {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    pub fn key(&self) -> ParagraphKey {
        ParagraphKey {
            doc_id: self.doc_id.clone(),
            para_index: self.para_index,
        }
    }
}

/// `(doc_id, para_index)`; orders the way retrieval ties are broken.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParagraphKey {
    pub doc_id: String,
    pub para_index: u32,
}

impl fmt::Display for ParagraphKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.doc_id, self.para_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum CorpusTag {
    WikiQA,
    SelQA,
    SQuAD,
    InfoboxQA,
    #[default]
    Other,
}

impl CorpusTag {
    pub fn as_str(self) -> &'static str {
        match self {
            CorpusTag::WikiQA => "WikiQA",
            CorpusTag::SelQA => "SelQA",
            CorpusTag::SQuAD => "SQuAD",
            CorpusTag::InfoboxQA => "InfoboxQA",
            CorpusTag::Other => "Other",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            CorpusTag::WikiQA,
            CorpusTag::SelQA,
            CorpusTag::SQuAD,
            CorpusTag::InfoboxQA,
            CorpusTag::Other,
        ]
        .into_iter()
        .find(|t| t.as_str().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for CorpusTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceRef {
    pub doc_id: String,
    pub para_index: u32,
    pub sent_index: u32,
}

impl SourceRef {
    pub fn paragraph(&self) -> ParagraphKey {
        ParagraphKey {
            doc_id: self.doc_id.clone(),
            para_index: self.para_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub tokens: Vec<String>,
    pub is_gold: bool,
    pub source_ref: Option<SourceRef>,
}

impl Candidate {
    pub fn new(text: &str, is_gold: bool, cfg: &TokenizerConfig) -> Self {
        let text = text::normalize_text(text, cfg).into_owned();
        let tokens = text::tokenize(&text, cfg);
        Self {
            text,
            tokens,
            is_gold,
            source_ref: None,
        }
    }

    pub fn with_source(mut self, source: SourceRef) -> Self {
        self.source_ref = Some(source);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAEntry {
    pub question_id: String,
    pub question_text: String,
    pub question_tokens: Vec<String>,
    pub candidates: Vec<Candidate>,
    pub corpus_tag: CorpusTag,
}

impl QAEntry {
    pub fn new(
        question_id: impl Into<String>,
        question_text: &str,
        corpus_tag: CorpusTag,
        candidates: Vec<Candidate>,
        cfg: &TokenizerConfig,
    ) -> Self {
        let question_text = text::normalize_text(question_text, cfg).into_owned();
        let question_tokens = text::tokenize(&question_text, cfg);
        Self {
            question_id: question_id.into(),
            question_text,
            question_tokens,
            candidates,
            corpus_tag,
        }
    }

    pub fn gold_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_gold)
            .map(|(i, _)| i)
    }

    pub fn golds(&self) -> impl Iterator<Item = &Candidate> + '_ {
        self.candidates.iter().filter(|c| c.is_gold)
    }

    pub fn has_gold(&self) -> bool {
        self.candidates.iter().any(|c| c.is_gold)
    }
}

/// Weights and threshold of the weighted n-gram similarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAlignmentConfig", into = "RawAlignmentConfig")]
pub struct AlignmentConfig {
    lambdas: [f64; 3],
    theta: f64,
    top_m: usize,
}

#[derive(Serialize, Deserialize)]
struct RawAlignmentConfig {
    #[serde(default = "default_lambdas")]
    lambdas: [f64; 3],
    #[serde(default = "default_theta")]
    theta: f64,
    #[serde(default = "default_top_m")]
    top_m: usize,
}

fn default_lambdas() -> [f64; 3] {
    AlignmentConfig::DEFAULT_LAMBDAS
}
fn default_theta() -> f64 {
    AlignmentConfig::DEFAULT_THETA
}
fn default_top_m() -> usize {
    AlignmentConfig::DEFAULT_TOP_M
}

impl TryFrom<RawAlignmentConfig> for AlignmentConfig {
    type Error = Error;
    fn try_from(raw: RawAlignmentConfig) -> Result<Self> {
        AlignmentConfig::new(raw.lambdas, raw.theta, raw.top_m)
    }
}

impl From<AlignmentConfig> for RawAlignmentConfig {
    fn from(cfg: AlignmentConfig) -> Self {
        Self {
            lambdas: cfg.lambdas,
            theta: cfg.theta,
            top_m: cfg.top_m,
        }
    }
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            lambdas: Self::DEFAULT_LAMBDAS,
            theta: Self::DEFAULT_THETA,
            top_m: Self::DEFAULT_TOP_M,
        }
    }
}

impl AlignmentConfig {
    pub const DEFAULT_LAMBDAS: [f64; 3] = [0.25, 0.35, 0.4];
    pub const DEFAULT_THETA: f64 = 0.4;
    pub const DEFAULT_TOP_M: usize = 5;

    /// Validates the weights. The third weight is stored as
    /// `1 - λ1 - λ2` once the sum has been checked, so that identical
    /// sentences always score exactly 1.
    pub fn new(lambdas: [f64; 3], theta: f64, top_m: usize) -> Result<Self> {
        if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::invalid(format!(
                "lambdas must be finite and non-negative, got {lambdas:?}"
            )));
        }
        let sum: f64 = lambdas.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_EPSILON {
            return Err(Error::invalid(format!(
                "lambdas must sum to 1, got {lambdas:?} (sum {sum})"
            )));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::invalid(format!("theta must be in [0, 1], got {theta}")));
        }
        if top_m == 0 {
            return Err(Error::invalid("top_m must be positive"));
        }
        let third = (1.0 - lambdas[0] - lambdas[1]).max(0.0);
        Ok(Self {
            lambdas: [lambdas[0], lambdas[1], third],
            theta,
            top_m,
        })
    }

    pub fn lambdas(&self) -> [f64; 3] {
        self.lambdas
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn top_m(&self) -> usize {
        self.top_m
    }

    pub fn with_theta(self, theta: f64) -> Result<Self> {
        Self::new(self.lambdas, theta, self.top_m)
    }
}

/// A gold answer sentence mapped to its silver-standard paragraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAlignmentRecord", into = "RawAlignmentRecord")]
pub struct AlignmentRecord {
    question_id: String,
    answer_sentence: String,
    doc_id: String,
    para_index: u32,
    sent_index: u32,
    score_t: f64,
    component_scores: [f64; 3],
    lambdas: [f64; 3],
    theta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawAlignmentRecord {
    question_id: String,
    answer_sentence: String,
    doc_id: String,
    para_index: u32,
    sent_index: u32,
    score_t: f64,
    component_scores: [f64; 3],
    lambdas: [f64; 3],
    theta: f64,
}

impl TryFrom<RawAlignmentRecord> for AlignmentRecord {
    type Error = Error;
    fn try_from(raw: RawAlignmentRecord) -> Result<Self> {
        let rec = AlignmentRecord {
            question_id: raw.question_id,
            answer_sentence: raw.answer_sentence,
            doc_id: raw.doc_id,
            para_index: raw.para_index,
            sent_index: raw.sent_index,
            score_t: raw.score_t,
            component_scores: raw.component_scores,
            lambdas: raw.lambdas,
            theta: raw.theta,
        };
        rec.check()?;
        Ok(rec)
    }
}

impl From<AlignmentRecord> for RawAlignmentRecord {
    fn from(rec: AlignmentRecord) -> Self {
        Self {
            question_id: rec.question_id,
            answer_sentence: rec.answer_sentence,
            doc_id: rec.doc_id,
            para_index: rec.para_index,
            sent_index: rec.sent_index,
            score_t: rec.score_t,
            component_scores: rec.component_scores,
            lambdas: rec.lambdas,
            theta: rec.theta,
        }
    }
}

impl AlignmentRecord {
    /// Rejects scores outside `[0, 1]`, a `score_t` that disagrees with the
    /// weighted components, and any `score_t` below the threshold.
    pub fn new(
        question_id: impl Into<String>,
        answer_sentence: impl Into<String>,
        source: SourceRef,
        score_t: f64,
        component_scores: [f64; 3],
        cfg: &AlignmentConfig,
    ) -> Result<Self> {
        let rec = AlignmentRecord {
            question_id: question_id.into(),
            answer_sentence: answer_sentence.into(),
            doc_id: source.doc_id,
            para_index: source.para_index,
            sent_index: source.sent_index,
            score_t,
            component_scores,
            lambdas: cfg.lambdas(),
            theta: cfg.theta(),
        };
        rec.check()?;
        Ok(rec)
    }

    fn check(&self) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.score_t) || !self.component_scores.iter().all(|&x| in_unit(x)) {
            return Err(Error::invalid(format!(
                "alignment scores out of [0, 1] for {}",
                self.question_id
            )));
        }
        let weighted: f64 = self.lambdas.iter().zip(self.component_scores).map(|(l, n)| l * n).sum();
        if (weighted - self.score_t).abs() > WEIGHT_EPSILON {
            return Err(Error::invalid(format!(
                "score_t {} disagrees with weighted components {}",
                self.score_t, weighted
            )));
        }
        if self.score_t < self.theta {
            return Err(Error::invalid(format!(
                "score_t {} below theta {}",
                self.score_t, self.theta
            )));
        }
        Ok(())
    }

    pub fn question_id(&self) -> &str {
        &self.question_id
    }

    pub fn answer_sentence(&self) -> &str {
        &self.answer_sentence
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn para_index(&self) -> u32 {
        self.para_index
    }

    pub fn sent_index(&self) -> u32 {
        self.sent_index
    }

    pub fn score_t(&self) -> f64 {
        self.score_t
    }

    pub fn component_scores(&self) -> [f64; 3] {
        self.component_scores
    }

    pub fn lambdas(&self) -> [f64; 3] {
        self.lambdas
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn paragraph(&self) -> ParagraphKey {
        ParagraphKey {
            doc_id: self.doc_id.clone(),
            para_index: self.para_index,
        }
    }

    pub fn source(&self) -> SourceRef {
        SourceRef {
            doc_id: self.doc_id.clone(),
            para_index: self.para_index,
            sent_index: self.sent_index,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Question ids seen more than once, in order of first repetition.
    pub duplicates: Vec<String>,
    pub empty_pools: usize,
    pub goldless: usize,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.duplicates.is_empty() && self.empty_pools == 0 && self.goldless == 0
    }
}

/// Reports problems without rejecting anything.
pub fn validate_corpus(entries: &[QAEntry]) -> ValidationReport {
    let mut seen = HashSet::new();
    let mut repeated = BTreeMap::new();
    let mut report = ValidationReport::default();
    for (i, e) in entries.iter().enumerate() {
        if !seen.insert(e.question_id.as_str()) {
            repeated.entry(e.question_id.as_str()).or_insert(i);
        }
        if e.candidates.is_empty() {
            report.empty_pools += 1;
        }
        if !e.has_gold() {
            report.goldless += 1;
        }
    }
    let mut dups: Vec<(&str, usize)> = repeated.into_iter().collect();
    dups.sort_by_key(|&(_, i)| i);
    report.duplicates = dups.into_iter().map(|(q, _)| q.to_string()).collect();
    report
}
