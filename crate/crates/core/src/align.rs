//! Silver-standard alignment of gold answer sentences to indexed paragraphs.
//!
//! Each answer sentence is used as a query; every sentence of the top-m
//! retrieved paragraphs is scored with a weighted sum of 1-, 2- and
//! 3-gram cosine similarities, and the best sentence is accepted when its
//! score reaches the threshold.

use std::collections::HashMap;
use std::fs::File;
use std::hash::Hash;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AlignmentConfig, AlignmentRecord, Candidate, QAEntry, SourceRef};
use crate::error::{Error, Result};
use crate::index::{NGramIndex, OrderWeights};
use crate::ingest::is_provenance_line;
use crate::text::{self, ORDERS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBreakdown {
    /// Cosine similarity per order, `[n1, n2, n3]`.
    pub components: [f64; 3],
    pub t: f64,
}

fn counts<S: Hash + Eq>(tokens: &[S], order: usize) -> HashMap<&[S], u64> {
    let mut map = HashMap::new();
    if tokens.len() >= order {
        for w in tokens.windows(order) {
            *map.entry(w).or_insert(0) += 1;
        }
    }
    map
}

/// Cosine of the term-frequency vectors of the `order`-grams of `a` and
/// `b`; 0 when either side has no n-gram of that order.
pub fn ngram_cosine<S: Hash + Eq>(a: &[S], b: &[S], order: usize) -> Result<f64> {
    text::check_order(order)?;
    let ca = counts(a, order);
    let cb = counts(b, order);
    if ca.is_empty() || cb.is_empty() {
        return Ok(0.0);
    }
    let (small, large) = if ca.len() <= cb.len() { (&ca, &cb) } else { (&cb, &ca) };
    let dot: u64 = small.iter().filter_map(|(g, x)| large.get(g).map(|y| x * y)).sum();
    if dot == 0 {
        return Ok(0.0);
    }
    let na: u64 = ca.values().map(|x| x * x).sum();
    let nb: u64 = cb.values().map(|x| x * x).sum();
    // sqrt of an exact square is exact, so identical inputs give exactly 1.
    let norm = (na as f64 * nb as f64).sqrt();
    Ok((dot as f64 / norm).min(1.0))
}

/// `t = λ1·n1 + λ2·n2 + λ3·n3`.
///
/// Evaluated as `n3 + λ1·(n1 - n3) + λ2·(n2 - n3)`, which is the same sum
/// when the weights add to one and is exactly 1 for identical inputs.
pub fn weighted_similarity<S: Hash + Eq>(a: &[S], b: &[S], cfg: &AlignmentConfig) -> SimilarityBreakdown {
    let mut components = [0.0; 3];
    for order in ORDERS {
        components[order - 1] = ngram_cosine(a, b, order).expect("valid order");
    }
    let [l1, l2, _] = cfg.lambdas();
    let [n1, n2, n3] = components;
    let t = (n3 + l1 * (n1 - n3) + l2 * (n2 - n3)).clamp(0.0, 1.0);
    SimilarityBreakdown { components, t }
}

/// Highest-scoring sentence among the retrieved paragraphs.
#[derive(Debug, Clone, PartialEq)]
pub struct BestMatch {
    pub source: SourceRef,
    /// 1-based retrieval rank of the paragraph.
    pub rank: usize,
    pub similarity: SimilarityBreakdown,
}

/// Retrieves `top_m` paragraphs for `tokens` and returns the sentence with
/// the largest `t`, ties going to the better-ranked paragraph and then the
/// earlier sentence. No threshold is applied.
pub fn best_match(
    tokens: &[String],
    index: &NGramIndex,
    cfg: &AlignmentConfig,
    weights: OrderWeights,
) -> Result<Option<BestMatch>> {
    if tokens.is_empty() {
        return Ok(None);
    }
    let hits = index.search(tokens, cfg.top_m(), weights)?;
    let mut best: Option<BestMatch> = None;
    for hit in &hits {
        let para = index.get_paragraph(&hit.doc_id, hit.para_index)?;
        for sent in &para.sentences {
            let sim = weighted_similarity(tokens, &sent.tokens, cfg);
            if best.as_ref().is_none_or(|b| sim.t > b.similarity.t) {
                best = Some(BestMatch {
                    source: SourceRef {
                        doc_id: para.doc_id.clone(),
                        para_index: para.para_index,
                        sent_index: sent.sent_index,
                    },
                    rank: hit.rank,
                    similarity: sim,
                });
            }
        }
    }
    Ok(best)
}

fn to_record(
    question_id: &str,
    answer: &Candidate,
    m: &BestMatch,
    cfg: &AlignmentConfig,
) -> Result<Option<AlignmentRecord>> {
    if m.similarity.t < cfg.theta() {
        return Ok(None);
    }
    AlignmentRecord::new(
        question_id,
        answer.text.clone(),
        m.source.clone(),
        m.similarity.t,
        m.similarity.components,
        cfg,
    )
    .map(Some)
}

/// Aligns one answer sentence; `None` when nothing reaches `θ` or the
/// answer has no tokens.
pub fn align_answer(
    question_id: &str,
    answer: &Candidate,
    index: &NGramIndex,
    cfg: &AlignmentConfig,
    weights: OrderWeights,
) -> Result<Option<AlignmentRecord>> {
    if answer.tokens.is_empty() {
        warn!("answer sentence of {question_id} has no tokens; not aligned");
        return Ok(None);
    }
    match best_match(&answer.tokens, index, cfg, weights)? {
        Some(m) => to_record(question_id, answer, &m, cfg),
        None => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub theta: f64,
    /// Gold answer sentences aligned.
    pub gamma_c: usize,
    /// `100 · gamma_c / total_gold`.
    pub gamma_p: f64,
    pub total_gold: usize,
    /// Gold sentences that tokenized to nothing.
    pub empty_answers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilverDataset {
    pub records: Vec<AlignmentRecord>,
    pub stats: CoverageStats,
    /// One row per threshold of the requested sweep, in the given order.
    pub sweep: Vec<CoverageStats>,
}

/// Aligns every gold candidate of `corpus`. Retrieval and scoring run
/// once; each threshold of `sweep` is then applied to the same matches,
/// so coverage is non-increasing in the threshold by construction.
pub fn build_silver_dataset(
    corpus: &[QAEntry],
    index: &NGramIndex,
    cfg: &AlignmentConfig,
    weights: OrderWeights,
    sweep: &[f64],
) -> Result<SilverDataset> {
    let golds: Vec<(&str, &Candidate)> = corpus
        .iter()
        .flat_map(|e| e.golds().map(move |c| (e.question_id.as_str(), c)))
        .collect();
    let matches: Vec<Option<BestMatch>> = golds
        .par_iter()
        .map(|(qid, c)| {
            if c.tokens.is_empty() {
                warn!("answer sentence of {qid} has no tokens; not aligned");
                return Ok(None);
            }
            best_match(&c.tokens, index, cfg, weights)
        })
        .collect::<Result<_>>()?;

    let empty_answers = golds.iter().filter(|(_, c)| c.tokens.is_empty()).count();
    let coverage = |theta: f64| -> CoverageStats {
        let gamma_c = matches.iter().flatten().filter(|m| m.similarity.t >= theta).count();
        let total_gold = golds.len();
        CoverageStats {
            theta,
            gamma_c,
            gamma_p: percent(gamma_c, total_gold),
            total_gold,
            empty_answers,
        }
    };

    let mut records = Vec::new();
    for ((qid, cand), m) in golds.iter().zip(&matches) {
        if let Some(m) = m {
            if let Some(rec) = to_record(qid, cand, m, cfg)? {
                records.push(rec);
            }
        }
    }
    for &theta in sweep {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::invalid(format!("sweep theta {theta} outside [0, 1]")));
        }
    }
    Ok(SilverDataset {
        stats: coverage(cfg.theta()),
        sweep: sweep.iter().map(|&t| coverage(t)).collect(),
        records,
    })
}

pub(crate) fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Writes records as JSONL, after an optional header line.
pub fn write_silver(path: impl AsRef<Path>, header: Option<&str>, records: &[AlignmentRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        if let Some(h) = header {
            writeln!(w, "{h}")?;
        }
        for r in records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load_silver(path: impl AsRef<Path>) -> Result<Vec<AlignmentRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || (i == 0 && is_provenance_line(&line)) {
            continue;
        }
        let rec: AlignmentRecord = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}
