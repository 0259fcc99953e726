//! Answer-selection and answer-triggering metrics over ranked candidates.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::weighted_similarity;
use crate::corpus::{AlignmentConfig, QAEntry};
use crate::error::{Error, Result};
use crate::ingest::is_provenance_line;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    /// Position in the question's original candidate list.
    pub index: usize,
    pub score: f64,
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedQuestion {
    pub question_id: String,
    /// Sorted by score descending, ties by original index.
    pub candidates: Vec<RankedCandidate>,
}

impl RankedQuestion {
    pub fn from_scores(question_id: impl Into<String>, scores: &[f64], relevant: &[bool]) -> Result<Self> {
        if scores.len() != relevant.len() {
            return Err(Error::invalid(format!(
                "{} scores for {} candidates",
                scores.len(),
                relevant.len()
            )));
        }
        let mut candidates: Vec<RankedCandidate> = scores
            .iter()
            .zip(relevant)
            .enumerate()
            .map(|(index, (&score, &relevant))| RankedCandidate { index, score, relevant })
            .collect();
        candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
        Ok(Self {
            question_id: question_id.into(),
            candidates,
        })
    }

    pub fn has_relevant(&self) -> bool {
        self.candidates.iter().any(|c| c.relevant)
    }

    /// Mean of precision@rank over the relevant ranks.
    pub fn average_precision(&self) -> Option<f64> {
        let mut hits = 0usize;
        let mut sum = 0.0;
        for (i, c) in self.candidates.iter().enumerate() {
            if c.relevant {
                hits += 1;
                sum += hits as f64 / (i + 1) as f64;
            }
        }
        (hits > 0).then(|| sum / hits as f64)
    }

    pub fn reciprocal_rank(&self) -> Option<f64> {
        self.candidates
            .iter()
            .position(|c| c.relevant)
            .map(|i| 1.0 / (i + 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRun {
    pub label: String,
    pub questions: Vec<RankedQuestion>,
}

impl RankingRun {
    /// Ranks every entry of `corpus` with `scores[i]` (aligned to
    /// `corpus[i].candidates`); relevance is the gold flag.
    pub fn from_corpus(label: impl Into<String>, corpus: &[QAEntry], scores: &[Vec<f64>]) -> Result<Self> {
        if corpus.len() != scores.len() {
            return Err(Error::invalid(format!(
                "{} score lists for {} questions",
                scores.len(),
                corpus.len()
            )));
        }
        let questions = corpus
            .iter()
            .zip(scores)
            .map(|(e, s)| {
                let rel: Vec<bool> = e.candidates.iter().map(|c| c.is_gold).collect();
                RankedQuestion::from_scores(e.question_id.clone(), s, &rel)
                    .map_err(|err| Error::invalid(format!("question {}: {err}", e.question_id)))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            label: label.into(),
            questions,
        })
    }

    /// Scores every question with [`baseline_overlap_scorer`].
    pub fn baseline(corpus: &[QAEntry]) -> Self {
        let scores: Vec<Vec<f64>> = corpus
            .iter()
            .map(|e| {
                let mut s = vec![0.0; e.candidates.len()];
                for sc in baseline_overlap_scorer(e) {
                    s[sc.index] = sc.score;
                }
                s
            })
            .collect();
        Self::from_corpus("baseline-overlap", corpus, &scores).expect("aligned by construction")
    }

    /// Questions without any relevant candidate; left out of MAP and MRR.
    pub fn excluded(&self) -> usize {
        self.questions.iter().filter(|q| !q.has_relevant()).count()
    }

    fn mean_of(&self, f: impl Fn(&RankedQuestion) -> Option<f64>) -> Result<f64> {
        if self.questions.is_empty() {
            return Err(Error::invalid("ranking run has no questions"));
        }
        let values: Vec<f64> = self.questions.iter().filter_map(f).collect();
        if values.is_empty() {
            return Err(Error::invalid("no question has a relevant candidate"));
        }
        Ok(values.iter().sum::<f64>() / values.len() as f64)
    }
}

pub fn mean_average_precision(run: &RankingRun) -> Result<f64> {
    run.mean_of(RankedQuestion::average_precision)
}

pub fn mean_reciprocal_rank(run: &RankingRun) -> Result<f64> {
    run.mean_of(RankedQuestion::reciprocal_rank)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerDecision {
    pub question_id: String,
    /// Original index of the predicted candidate; `None` is an abstention.
    pub predicted: Option<usize>,
    pub score: f64,
    pub threshold: f64,
}

impl TriggerDecision {
    /// Predicts the top candidate when its score reaches `threshold`.
    pub fn from_ranking(q: &RankedQuestion, threshold: f64) -> Self {
        let top = q.candidates.first();
        let score = top.map_or(0.0, |c| c.score);
        Self {
            question_id: q.question_id.clone(),
            predicted: top.filter(|c| c.score >= threshold).map(|c| c.index),
            score,
            threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predictions: usize,
    pub correct: usize,
    /// Questions with at least one gold candidate.
    pub answerable: usize,
}

/// Question-level triggering scores: a prediction is correct when the
/// predicted candidate is gold. Precision is over predictions made, recall
/// over answerable questions; either is 0 when its denominator is.
pub fn triggering_f1(decisions: &[TriggerDecision], gold: &HashMap<String, BTreeSet<usize>>) -> Result<TriggerScores> {
    let mut seen = HashSet::new();
    let mut predictions = 0;
    let mut correct = 0;
    for d in decisions {
        if !seen.insert(d.question_id.as_str()) {
            return Err(Error::invalid(format!(
                "duplicate decision for question {}",
                d.question_id
            )));
        }
        let g = gold
            .get(&d.question_id)
            .ok_or_else(|| Error::invalid(format!("no gold set for question {}", d.question_id)))?;
        if let Some(p) = d.predicted {
            predictions += 1;
            if g.contains(&p) {
                correct += 1;
            }
        }
    }
    if let Some(missing) = gold.keys().find(|q| !seen.contains(q.as_str())) {
        return Err(Error::invalid(format!("no decision for question {missing}")));
    }
    let answerable = gold.values().filter(|g| !g.is_empty()).count();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(correct, predictions);
    let recall = ratio(correct, answerable);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(TriggerScores {
        precision,
        recall,
        f1,
        predictions,
        correct,
        answerable,
    })
}

/// Gold candidate indices per question, as used by [`triggering_f1`].
pub fn gold_sets(corpus: &[QAEntry]) -> HashMap<String, BTreeSet<usize>> {
    corpus
        .iter()
        .map(|e| (e.question_id.clone(), e.gold_indices().collect()))
        .collect()
}

pub fn trigger_decisions(run: &RankingRun, threshold: f64) -> Vec<TriggerDecision> {
    run.questions
        .iter()
        .map(|q| TriggerDecision::from_ranking(q, threshold))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub index: usize,
    pub score: f64,
}

/// Lexical stand-in for a trained answer selector: each candidate scores
/// its weighted n-gram similarity to the question under the default
/// weights. Sorted by score, ties in original order.
pub fn baseline_overlap_scorer(question: &QAEntry) -> Vec<ScoredCandidate> {
    let cfg = AlignmentConfig::default();
    let mut scored: Vec<ScoredCandidate> = question
        .candidates
        .iter()
        .enumerate()
        .map(|(index, c)| ScoredCandidate {
            index,
            score: weighted_similarity(&question.question_tokens, &c.tokens, &cfg).t,
        })
        .collect();
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    scored
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLine {
    pub question_id: String,
    pub scores: Vec<f64>,
}

/// Reads a run file: JSONL of `{"question_id", "scores": [..]}`.
pub fn load_run_file(path: impl AsRef<Path>) -> Result<Vec<RunLine>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || (i == 0 && is_provenance_line(&line)) {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

/// Aligns run lines to the corpus by question id. Every corpus question
/// needs exactly one line with one score per candidate.
pub fn run_from_lines(label: impl Into<String>, corpus: &[QAEntry], lines: &[RunLine]) -> Result<RankingRun> {
    let mut by_id: HashMap<&str, &RunLine> = HashMap::new();
    for l in lines {
        if by_id.insert(l.question_id.as_str(), l).is_some() {
            return Err(Error::invalid(format!("run file repeats question {}", l.question_id)));
        }
    }
    let scores = corpus
        .iter()
        .map(|e| {
            by_id
                .get(e.question_id.as_str())
                .map(|l| l.scores.clone())
                .ok_or_else(|| Error::invalid(format!("run file lacks question {}", e.question_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    if by_id.len() != corpus.len() {
        return Err(Error::invalid("run file has questions missing from the corpus"));
    }
    RankingRun::from_corpus(label, corpus, &scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Candidate, CorpusTag};
    use crate::text::TokenizerConfig;

    fn q(id: &str, rel: &[bool]) -> RankedQuestion {
        // Scores strictly decreasing so the given order is the ranking.
        let scores: Vec<f64> = (0..rel.len()).map(|i| (rel.len() - i) as f64).collect();
        RankedQuestion::from_scores(id, &scores, rel).unwrap()
    }

    fn run(qs: Vec<RankedQuestion>) -> RankingRun {
        RankingRun {
            label: "t".into(),
            questions: qs,
        }
    }

    #[test]
    fn map_examples() {
        assert_eq!(
            mean_average_precision(&run(vec![q("a", &[true, false, false])])).unwrap(),
            1.0
        );
        assert_eq!(
            mean_average_precision(&run(vec![q("a", &[false, true, false])])).unwrap(),
            0.5
        );
        let ap = mean_average_precision(&run(vec![q("a", &[true, false, true])])).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn mrr_examples() {
        assert_eq!(mean_reciprocal_rank(&run(vec![q("a", &[true])])).unwrap(), 1.0);
        assert_eq!(
            mean_reciprocal_rank(&run(vec![q("a", &[false, false, false, true])])).unwrap(),
            0.25
        );
        assert_eq!(
            mean_reciprocal_rank(&run(vec![q("a", &[true]), q("b", &[false, true])])).unwrap(),
            0.75
        );
    }

    #[test]
    fn empty_run_and_exclusions() {
        assert!(mean_average_precision(&run(vec![])).is_err());
        let r = run(vec![q("a", &[false, false]), q("b", &[false, true])]);
        assert_eq!(r.excluded(), 1);
        assert_eq!(mean_reciprocal_rank(&r).unwrap(), 0.5);
        assert!(mean_average_precision(&run(vec![q("a", &[false])])).is_err());
    }

    #[test]
    fn ties_keep_original_order() {
        let rq = RankedQuestion::from_scores("x", &[0.5, 0.9, 0.5], &[true, false, false]).unwrap();
        let order: Vec<usize> = rq.candidates.iter().map(|c| c.index).collect();
        assert_eq!(order, [1, 0, 2]);
    }

    fn decision(id: &str, predicted: Option<usize>) -> TriggerDecision {
        TriggerDecision {
            question_id: id.into(),
            predicted,
            score: 1.0,
            threshold: 0.4,
        }
    }

    fn golds(pairs: &[(&str, &[usize])]) -> HashMap<String, BTreeSet<usize>> {
        pairs
            .iter()
            .map(|(q, g)| (q.to_string(), g.iter().copied().collect()))
            .collect()
    }

    #[test]
    fn f1_perfect() {
        let g = golds(&[("a", &[0]), ("b", &[2])]);
        let s = triggering_f1(&[decision("a", Some(0)), decision("b", Some(2))], &g).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn f1_abstain_everywhere() {
        let g = golds(&[("a", &[0]), ("b", &[])]);
        let s = triggering_f1(&[decision("a", None), decision("b", None)], &g).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn f1_mixed() {
        // Gold-bearing: a, b. Predictions on a (correct), b (wrong), c (gold-less).
        let g = golds(&[("a", &[0]), ("b", &[1]), ("c", &[]), ("d", &[])]);
        let d = [
            decision("a", Some(0)),
            decision("b", Some(0)),
            decision("c", Some(3)),
            decision("d", None),
        ];
        let s = triggering_f1(&d, &g).unwrap();
        assert!((s.precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.recall, 0.5);
        assert!((s.f1 - 0.4).abs() < 1e-15);
    }

    #[test]
    fn f1_duplicate_rejected() {
        let g = golds(&[("a", &[0])]);
        assert!(matches!(
            triggering_f1(&[decision("a", None), decision("a", None)], &g),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn trigger_threshold() {
        let rq = RankedQuestion::from_scores("x", &[0.3, 0.2], &[true, false]).unwrap();
        assert_eq!(TriggerDecision::from_ranking(&rq, 0.4).predicted, None);
        assert_eq!(TriggerDecision::from_ranking(&rq, 0.3).predicted, Some(0));
    }

    fn entry(question: &str, cands: &[&str]) -> QAEntry {
        let cfg = TokenizerConfig::default();
        let c = cands.iter().map(|t| Candidate::new(t, false, &cfg)).collect();
        QAEntry::new("q", question, CorpusTag::Other, c, &cfg)
    }

    #[test]
    fn baseline_identity_first() {
        let e = entry("who founded apple", &["nothing here", "who founded apple"]);
        let s = baseline_overlap_scorer(&e);
        assert_eq!(s[0], ScoredCandidate { index: 1, score: 1.0 });
    }

    #[test]
    fn baseline_all_disjoint_keeps_order() {
        let e = entry("alpha beta", &["x", "y", "z"]);
        let s = baseline_overlap_scorer(&e);
        assert_eq!(s.iter().map(|c| c.index).collect::<Vec<_>>(), [0, 1, 2]);
        assert!(s.iter().all(|c| c.score == 0.0));
    }
}
