mod common;

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use qacorpus::analytics::{compute_stats, type_distribution, QuestionLexicon, QuestionType};
use qacorpus::ingest::load_unified;
use qacorpus::metrics::{
    baseline_overlap_scorer, gold_sets, load_run_file, mean_average_precision, mean_reciprocal_rank, run_from_lines,
    trigger_decisions, triggering_f1, RunLine,
};
use qacorpus::{AlignmentConfig, Candidate, CorpusTag, QAEntry, TokenizerConfig};
use serde_json::Value;

/// Hand-computed values are stored as decimal literals; this covers the
/// last-digit rounding of those literals and nothing more.
const EXACT: f64 = 1e-12;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn expected() -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture("metrics_expected.json")).unwrap()).unwrap()
}

fn close(a: f64, b: &Value) {
    let b = b.as_f64().unwrap();
    assert!((a - b).abs() <= EXACT, "{a} vs {b}");
}

#[test]
fn metrics_golden_file() {
    let exp = expected();
    let cfg = TokenizerConfig::default();
    let corpus = load_unified(fixture("metrics_corpus.jsonl"), &cfg).unwrap().entries;
    let lines = load_run_file(fixture("metrics_run.jsonl")).unwrap();
    let run = run_from_lines("golden", &corpus, &lines).unwrap();

    for q in &run.questions {
        match &exp["per_question"][&q.question_id] {
            Value::Null => assert!(q.average_precision().is_none()),
            e => {
                close(q.average_precision().unwrap(), &e["ap"]);
                close(q.reciprocal_rank().unwrap(), &e["rr"]);
            }
        }
    }
    assert_eq!(run.excluded() as u64, exp["excluded"].as_u64().unwrap());
    close(mean_average_precision(&run).unwrap(), &exp["map"]);
    close(mean_reciprocal_rank(&run).unwrap(), &exp["mrr"]);

    let threshold = exp["threshold"].as_f64().unwrap();
    let gold = gold_sets(&corpus);
    let s = triggering_f1(&trigger_decisions(&run, threshold), &gold).unwrap();
    let t = &exp["trigger"];
    assert_eq!(s.predictions as u64, t["predictions"].as_u64().unwrap());
    assert_eq!(s.correct as u64, t["correct"].as_u64().unwrap());
    assert_eq!(s.answerable as u64, t["answerable"].as_u64().unwrap());
    close(s.precision, &t["precision"]);
    close(s.recall, &t["recall"]);
    close(s.f1, &t["f1"]);

    let subset: BTreeSet<&str> = exp["subset"]["questions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    let decisions: Vec<_> = trigger_decisions(&run, threshold)
        .into_iter()
        .filter(|d| subset.contains(d.question_id.as_str()))
        .collect();
    let sub_gold: HashMap<String, BTreeSet<usize>> = gold
        .iter()
        .filter(|(q, _)| subset.contains(q.as_str()))
        .map(|(q, g)| (q.clone(), g.clone()))
        .collect();
    let s = triggering_f1(&decisions, &sub_gold).unwrap();
    close(s.precision, &exp["subset"]["precision"]);
    close(s.recall, &exp["subset"]["recall"]);
    close(s.f1, &exp["subset"]["f1"]);
}

#[test]
fn metrics_invariant_under_score_scaling() {
    let cfg = TokenizerConfig::default();
    let corpus = load_unified(fixture("metrics_corpus.jsonl"), &cfg).unwrap().entries;
    let lines = load_run_file(fixture("metrics_run.jsonl")).unwrap();
    let scaled: Vec<RunLine> = lines
        .iter()
        .map(|l| RunLine {
            question_id: l.question_id.clone(),
            scores: l.scores.iter().map(|s| s * 7.0).collect(),
        })
        .collect();
    let a = run_from_lines("a", &corpus, &lines).unwrap();
    let b = run_from_lines("b", &corpus, &scaled).unwrap();
    assert_eq!(mean_average_precision(&a).unwrap(), mean_average_precision(&b).unwrap());
    assert_eq!(mean_reciprocal_rank(&a).unwrap(), mean_reciprocal_rank(&b).unwrap());
    let gold = gold_sets(&corpus);
    assert_eq!(
        triggering_f1(&trigger_decisions(&a, 0.5), &gold).unwrap(),
        triggering_f1(&trigger_decisions(&b, 3.5), &gold).unwrap()
    );
}

#[test]
fn triggering_is_order_invariant() {
    let cfg = TokenizerConfig::default();
    let corpus = load_unified(fixture("metrics_corpus.jsonl"), &cfg).unwrap().entries;
    let run = run_from_lines("r", &corpus, &load_run_file(fixture("metrics_run.jsonl")).unwrap()).unwrap();
    let gold = gold_sets(&corpus);
    let mut d = trigger_decisions(&run, 0.5);
    let forward = triggering_f1(&d, &gold).unwrap();
    d.reverse();
    assert_eq!(triggering_f1(&d, &gold).unwrap(), forward);
}

#[test]
fn baseline_ranking_matches_hand_scoring() {
    let cfg = TokenizerConfig::default();
    let texts = [
        "The river flows north.",
        "Who built the old bridge over the river?",
        "The old bridge was built in 1890.",
        "Nothing relevant here.",
        "who built the old bridge",
    ];
    let cands = texts.iter().map(|t| Candidate::new(t, false, &cfg)).collect();
    let q = QAEntry::new("b", "Who built the old bridge?", CorpusTag::Other, cands, &cfg);
    let lambdas = AlignmentConfig::default().lambdas();
    let mut hand: Vec<(usize, f64)> = q
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (i, common::weighted(&q.question_tokens, &c.tokens, lambdas)))
        .collect();
    hand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let got = baseline_overlap_scorer(&q);
    assert_eq!(
        got.iter().map(|s| s.index).collect::<Vec<_>>(),
        hand.iter().map(|h| h.0).collect::<Vec<_>>()
    );
    assert_eq!(got[0].index, 4);
    assert_eq!(got[0].score, 1.0);
    assert_eq!(got[4].index, 3);
    assert_eq!(got[4].score, 0.0);
}

#[test]
fn toy_corpus_stats() {
    let corpus = load_unified(fixture("toy_stats.jsonl"), &TokenizerConfig::default())
        .unwrap()
        .entries;
    let s = compute_stats(&corpus).unwrap();
    assert_eq!((s.q, s.c, s.w, s.t), (2, 4, 24, 16));
    assert_eq!((s.c_over_q, s.mu_q, s.mu_c), (2.0, 4.0, 4.0));
    assert_eq!((s.omega_questions, s.omega_skipped), (2, 0));
    // Ω_q = (2/3 + 4/5) / 2, Ω_a = (2/4 + 4/6) / 2, in percent.
    assert!((s.omega_q - 1100.0 / 15.0).abs() <= 1e-9);
    assert!((s.omega_a - 700.0 / 12.0).abs() <= 1e-9);
    assert!((s.omega_f - 15400.0 / 237.0).abs() <= 1e-9);

    let d = type_distribution(&corpus, &QuestionLexicon::default()).unwrap();
    assert_eq!(d.percent(QuestionType::Who), 50.0);
    assert_eq!(d.percent(QuestionType::When), 50.0);
}

#[test]
fn stats_invariant_under_permutation() {
    let fx = common::planted_fixture(61, 20, 2, 30, |_| common::QuestionKind::Hit, |i| i % 5);
    let a = compute_stats(&fx.corpus).unwrap();
    let mut rev = fx.corpus.clone();
    rev.reverse();
    rev.rotate_left(7);
    assert_eq!(compute_stats(&rev).unwrap(), a);
    assert!(a.t <= a.w);
    assert!(a.mu_q * a.q as f64 <= a.w as f64);
    let lo = a.omega_q.min(a.omega_a);
    let hi = a.omega_q.max(a.omega_a);
    assert!(lo <= a.omega_f && a.omega_f <= hi);
}
