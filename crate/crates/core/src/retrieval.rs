//! Question-side retrieval benchmark against the silver standard, and the
//! answer-triggering dataset built from its top-k results.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::percent;
use crate::corpus::{AlignmentRecord, Candidate, ParagraphKey, QAEntry, SourceRef};
use crate::error::{Error, Result};
use crate::index::{NGramIndex, OrderWeights, RetrievalHit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub question_id: String,
    pub k: usize,
    pub hits: Vec<RetrievalHit>,
    /// Some hit is a silver passage of this question.
    pub correct: bool,
    /// Rank of the first silver passage among the hits.
    pub first_correct_rank: Option<usize>,
    pub matched_silver: Option<SourceRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub k: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Accuracy at each k, in percent of questions that have a silver record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
    /// Questions with a silver record (the denominator).
    pub evaluated: usize,
    /// Questions without one, left out of the denominator.
    pub excluded: usize,
    pub total_questions: usize,
}

impl AccuracyTable {
    pub fn render(&self) -> String {
        let mut out = format!("{:>6}  {:>9}  {:>10}\n", "k", "correct", "accuracy%");
        for r in &self.rows {
            out.push_str(&format!("{:>6}  {:>9}  {:>10.2}\n", r.k, r.correct, r.accuracy));
        }
        out.push_str(&format!(
            "evaluated {} of {} questions ({} without a silver passage excluded)\n",
            self.evaluated, self.total_questions, self.excluded
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    pub table: AccuracyTable,
    /// Per evaluated question, retrieved at the largest k.
    pub results: Vec<RetrievalResult>,
}

fn silver_by_question<'a>(
    questions: &[QAEntry],
    silver: &'a [AlignmentRecord],
) -> Result<HashMap<&'a str, Vec<&'a AlignmentRecord>>> {
    let known: HashSet<&str> = questions.iter().map(|q| q.question_id.as_str()).collect();
    let mut map: HashMap<&str, Vec<&AlignmentRecord>> = HashMap::new();
    for rec in silver {
        if !known.contains(rec.question_id()) {
            return Err(Error::invalid(format!(
                "silver record for unknown question {}",
                rec.question_id()
            )));
        }
        map.entry(rec.question_id()).or_default().push(rec);
    }
    Ok(map)
}

/// Accuracy@k: a question is correct at k when one of its top-k
/// paragraphs is one of its silver passages.
pub fn evaluate_retrieval(
    questions: &[QAEntry],
    silver: &[AlignmentRecord],
    index: &NGramIndex,
    ks: &[usize],
    weights: OrderWeights,
) -> Result<RetrievalReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::invalid(format!("every k must be at least 1, got {ks:?}")));
    }
    if silver.is_empty() {
        return Err(Error::invalid("silver standard is empty"));
    }
    let by_q = silver_by_question(questions, silver)?;
    let max_k = *ks.iter().max().expect("non-empty");

    let evaluated: Vec<&QAEntry> = questions
        .iter()
        .filter(|q| by_q.contains_key(q.question_id.as_str()))
        .collect();
    let results: Vec<RetrievalResult> = evaluated
        .par_iter()
        .map(|q| {
            let recs = &by_q[q.question_id.as_str()];
            let passages: HashMap<ParagraphKey, &AlignmentRecord> =
                recs.iter().rev().map(|r| (r.paragraph(), *r)).collect();
            let hits = if q.question_tokens.is_empty() {
                Vec::new()
            } else {
                index.search(&q.question_tokens, max_k, weights)?
            };
            let first = hits.iter().find(|h| passages.contains_key(&h.key()));
            Ok(RetrievalResult {
                question_id: q.question_id.clone(),
                k: max_k,
                correct: first.is_some(),
                first_correct_rank: first.map(|h| h.rank),
                matched_silver: first.map(|h| passages[&h.key()].source()),
                hits,
            })
        })
        .collect::<Result<_>>()?;

    let rows = ks
        .iter()
        .map(|&k| {
            let correct = results
                .iter()
                .filter(|r| r.first_correct_rank.is_some_and(|rank| rank <= k))
                .count();
            AccuracyRow {
                k,
                correct,
                accuracy: percent(correct, results.len()),
            }
        })
        .collect();
    Ok(RetrievalReport {
        table: AccuracyTable {
            rows,
            evaluated: results.len(),
            excluded: questions.len() - results.len(),
            total_questions: questions.len(),
        },
        results,
    })
}

/// True when accuracy never drops as k grows.
pub fn accuracy_monotonicity_check(table: &AccuracyTable) -> bool {
    let mut rows: Vec<&AccuracyRow> = table.rows.iter().collect();
    rows.sort_by_key(|r| r.k);
    rows.windows(2).all(|w| w[0].accuracy <= w[1].accuracy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggeringStats {
    pub k: usize,
    pub questions: usize,
    pub gold_less: usize,
    pub gold_less_pct: f64,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggeringDataset {
    pub entries: Vec<QAEntry>,
    pub stats: TriggeringStats,
}

/// For every question, the sentences of its top-k paragraphs in
/// `(rank, sent_index)` order; a sentence is gold only when it is the
/// question's silver sentence.
pub fn build_triggering_dataset(
    questions: &[QAEntry],
    silver: &[AlignmentRecord],
    index: &NGramIndex,
    k: usize,
    weights: OrderWeights,
) -> Result<TriggeringDataset> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let by_q = silver_by_question(questions, silver)?;
    let entries: Vec<QAEntry> = questions
        .par_iter()
        .map(|q| {
            let gold: HashSet<SourceRef> = by_q
                .get(q.question_id.as_str())
                .map(|rs| rs.iter().map(|r| r.source()).collect())
                .unwrap_or_default();
            let hits = if q.question_tokens.is_empty() {
                Vec::new()
            } else {
                index.search(&q.question_tokens, k, weights)?
            };
            let mut candidates = Vec::new();
            for hit in &hits {
                let para = index.get_paragraph(&hit.doc_id, hit.para_index)?;
                for sent in para.sentences {
                    let source = SourceRef {
                        doc_id: para.doc_id.clone(),
                        para_index: para.para_index,
                        sent_index: sent.sent_index,
                    };
                    candidates.push(Candidate {
                        is_gold: gold.contains(&source),
                        text: sent.text,
                        tokens: sent.tokens,
                        source_ref: Some(source),
                    });
                }
            }
            Ok(QAEntry {
                question_id: q.question_id.clone(),
                question_text: q.question_text.clone(),
                question_tokens: q.question_tokens.clone(),
                candidates,
                corpus_tag: q.corpus_tag,
            })
        })
        .collect::<Result<_>>()?;

    let gold_less = entries.iter().filter(|e| !e.has_gold()).count();
    let stats = TriggeringStats {
        k,
        questions: entries.len(),
        gold_less,
        gold_less_pct: percent(gold_less, entries.len()),
        candidates: entries.iter().map(|e| e.candidates.len()).sum(),
    };
    Ok(TriggeringDataset { entries, stats })
}
