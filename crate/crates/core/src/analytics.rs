//! Intrinsic corpus statistics and the question-type distribution.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::QAEntry;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub q: usize,
    pub c: usize,
    pub c_over_q: f64,
    /// Tokens over questions and candidates.
    pub w: usize,
    /// Distinct token types over questions and candidates.
    pub t: usize,
    pub mu_q: f64,
    pub mu_c: f64,
    pub omega_q: f64,
    pub omega_a: f64,
    pub omega_f: f64,
    /// Questions that contributed to the overlap averages.
    pub omega_questions: usize,
    /// Questions skipped for overlap: no gold, or no tokens on either side.
    pub omega_skipped: usize,
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Overlap of a question with its best gold, as (Ω_q, Ω_a) fractions.
/// The best gold has the largest overlap set; ties go to the earlier one.
fn question_overlap(entry: &QAEntry) -> Option<(f64, f64)> {
    let q: HashSet<&str> = entry.question_tokens.iter().map(String::as_str).collect();
    if q.is_empty() {
        return None;
    }
    let mut best: Option<(usize, usize)> = None;
    for gold in entry.golds() {
        let a: HashSet<&str> = gold.tokens.iter().map(String::as_str).collect();
        if a.is_empty() {
            continue;
        }
        let shared = q.intersection(&a).count();
        if best.is_none_or(|(s, _)| shared > s) {
            best = Some((shared, a.len()));
        }
    }
    best.map(|(shared, a_len)| (shared as f64 / q.len() as f64, shared as f64 / a_len as f64))
}

fn sorted_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Table-1 statistics of a corpus. Overlap uses unique token types with no
/// stopword removal, macro-averaged in percent.
pub fn compute_stats(corpus: &[QAEntry]) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::invalid("corpus is empty"));
    }
    let q = corpus.len();
    let c: usize = corpus.iter().map(|e| e.candidates.len()).sum();
    let q_tokens: usize = corpus.iter().map(|e| e.question_tokens.len()).sum();
    let c_tokens: usize = corpus.iter().flat_map(|e| &e.candidates).map(|c| c.tokens.len()).sum();
    let mut types: HashSet<&str> = HashSet::new();
    for e in corpus {
        types.extend(e.question_tokens.iter().map(String::as_str));
        for cand in &e.candidates {
            types.extend(cand.tokens.iter().map(String::as_str));
        }
    }

    let overlaps: Vec<(f64, f64)> = corpus.par_iter().filter_map(question_overlap).collect();
    let n = overlaps.len();
    let (omega_q, omega_a) = if n == 0 {
        (0.0, 0.0)
    } else {
        let oq = sorted_sum(overlaps.iter().map(|o| o.0).collect());
        let oa = sorted_sum(overlaps.iter().map(|o| o.1).collect());
        (100.0 * oq / n as f64, 100.0 * oa / n as f64)
    };

    Ok(CorpusStats {
        q,
        c,
        c_over_q: c as f64 / q as f64,
        w: q_tokens + c_tokens,
        t: types.len(),
        mu_q: q_tokens as f64 / q as f64,
        mu_c: if c == 0 { 0.0 } else { c_tokens as f64 / c as f64 },
        omega_q,
        omega_a,
        omega_f: harmonic_mean(omega_q, omega_a),
        omega_questions: n,
        omega_skipped: q - n,
    })
}

type StatRow = (&'static str, fn(&CorpusStats) -> String);

/// Table-1 layout: one row per statistic group, one column per corpus.
pub fn render_stats_table(columns: &[(&str, &CorpusStats)]) -> String {
    let rows: [StatRow; 4] = [
        ("(q, c, c/q)", |s| format!("({}, {}, {:.2})", s.q, s.c, s.c_over_q)),
        ("(w, t)", |s| format!("({}, {})", s.w, s.t)),
        ("(mu_q, mu_c)", |s| format!("({:.2}, {:.2})", s.mu_q, s.mu_c)),
        ("(omega_q, omega_a, omega_f)", |s| {
            format!("({:.2}, {:.2}, {:.2})", s.omega_q, s.omega_a, s.omega_f)
        }),
    ];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(_, f)| columns.iter().map(|(_, s)| f(s)).collect())
        .collect();
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let col_w: Vec<usize> = (0..columns.len())
        .map(|j| {
            cells
                .iter()
                .map(|r| r[j].len())
                .chain([columns[j].0.len()])
                .max()
                .unwrap_or(0)
        })
        .collect();

    let mut out = format!("{:label_w$}", "");
    for (j, (name, _)) in columns.iter().enumerate() {
        out.push_str(&format!(" | {:>w$}", name, w = col_w[j]));
    }
    out.push('\n');
    for (i, (label, _)) in rows.iter().enumerate() {
        out.push_str(&format!("{label:label_w$}"));
        for (j, cell) in cells[i].iter().enumerate() {
            out.push_str(&format!(" | {:>w$}", cell, w = col_w[j]));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    What,
    How,
    Who,
    When,
    Where,
    Why,
    Other,
}

impl QuestionType {
    pub const ALL: [QuestionType; 7] = [
        QuestionType::What,
        QuestionType::How,
        QuestionType::Who,
        QuestionType::When,
        QuestionType::Where,
        QuestionType::Why,
        QuestionType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::What => "what",
            QuestionType::How => "how",
            QuestionType::Who => "who",
            QuestionType::When => "when",
            QuestionType::Where => "where",
            QuestionType::Why => "why",
            QuestionType::Other => "other",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Interrogative words for each question type. A word listed under two
/// types resolves to the earlier one in [`QuestionType::ALL`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuestionLexicon {
    pub what: Vec<String>,
    pub how: Vec<String>,
    pub who: Vec<String>,
    pub when: Vec<String>,
    #[serde(rename = "where")]
    pub where_: Vec<String>,
    pub why: Vec<String>,
}

impl Default for QuestionLexicon {
    fn default() -> Self {
        let v = |words: &[&str]| words.iter().map(|w| w.to_string()).collect();
        Self {
            what: v(&["what", "which"]),
            how: v(&["how"]),
            who: v(&["who", "whom", "whose"]),
            when: v(&["when"]),
            where_: v(&["where"]),
            why: v(&["why"]),
        }
    }
}

impl QuestionLexicon {
    fn lookup(&self) -> HashMap<&str, QuestionType> {
        let lists = [
            (QuestionType::What, &self.what),
            (QuestionType::How, &self.how),
            (QuestionType::Who, &self.who),
            (QuestionType::When, &self.when),
            (QuestionType::Where, &self.where_),
            (QuestionType::Why, &self.why),
        ];
        let mut map = HashMap::new();
        for (ty, words) in lists {
            for w in words {
                map.entry(w.as_str()).or_insert(ty);
            }
        }
        map
    }

    /// First token found in any lexicon decides the type; none gives `Other`.
    pub fn classify<S: AsRef<str>>(&self, tokens: &[S]) -> QuestionType {
        classify_with(&self.lookup(), tokens)
    }
}

fn classify_with<S: AsRef<str>>(lookup: &HashMap<&str, QuestionType>, tokens: &[S]) -> QuestionType {
    tokens
        .iter()
        .find_map(|t| lookup.get(t.as_ref()).copied())
        .unwrap_or(QuestionType::Other)
}

/// [`QuestionLexicon::classify`] with the default lexicon.
pub fn classify_question_type<S: AsRef<str>>(tokens: &[S]) -> QuestionType {
    QuestionLexicon::default().classify(tokens)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeShare {
    #[serde(rename = "type")]
    pub question_type: QuestionType,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTypeDist {
    pub total: usize,
    /// Every type in [`QuestionType::ALL`] order, zero counts included.
    pub shares: Vec<TypeShare>,
}

impl QuestionTypeDist {
    pub fn percent(&self, ty: QuestionType) -> f64 {
        self.shares
            .iter()
            .find(|s| s.question_type == ty)
            .map_or(0.0, |s| s.percent)
    }

    pub fn modal(&self) -> QuestionType {
        self.shares
            .iter()
            .fold(None::<&TypeShare>, |best, s| match best {
                Some(b) if b.count >= s.count => Some(b),
                _ => Some(s),
            })
            .map_or(QuestionType::Other, |s| s.question_type)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("type,count,percent\n");
        for s in &self.shares {
            out.push_str(&format!("{},{},{:.4}\n", s.question_type, s.count, s.percent));
        }
        out
    }
}

pub fn type_distribution(corpus: &[QAEntry], lexicon: &QuestionLexicon) -> Result<QuestionTypeDist> {
    if corpus.is_empty() {
        return Err(Error::invalid("corpus is empty"));
    }
    let lookup = lexicon.lookup();
    let mut counts: HashMap<QuestionType, usize> = HashMap::new();
    for e in corpus {
        *counts.entry(classify_with(&lookup, &e.question_tokens)).or_default() += 1;
    }
    let total = corpus.len();
    let shares = QuestionType::ALL
        .iter()
        .map(|&ty| {
            let count = counts.get(&ty).copied().unwrap_or(0);
            TypeShare {
                question_type: ty,
                count,
                percent: 100.0 * count as f64 / total as f64,
            }
        })
        .collect();
    Ok(QuestionTypeDist { total, shares })
}
