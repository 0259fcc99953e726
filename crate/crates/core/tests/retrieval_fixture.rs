mod common;

use std::collections::HashSet;

use common::{first_relevant_rank, planted_fixture, split_fixture, BruteBm25, Fixture, QuestionKind};
use qacorpus::index::{NGramIndex, OrderWeights};
use qacorpus::retrieval::{accuracy_monotonicity_check, build_triggering_dataset, evaluate_retrieval};
use qacorpus::{build_index, build_silver_dataset, AlignmentConfig, AlignmentRecord, IndexSettings};
use tempfile::TempDir;

fn prepare(fx: &Fixture) -> (TempDir, NGramIndex, Vec<AlignmentRecord>) {
    let dir = tempfile::tempdir().unwrap();
    build_index(
        fx.paragraphs.iter().cloned().map(Ok),
        dir.path(),
        &IndexSettings::default(),
    )
    .unwrap();
    let index = NGramIndex::open(dir.path()).unwrap();
    let silver = build_silver_dataset(
        &fx.corpus,
        &index,
        &AlignmentConfig::default(),
        OrderWeights::default(),
        &[],
    )
    .unwrap();
    (dir, index, silver.records)
}

#[test]
fn planted_questions_retrieve_their_paragraph() {
    let fx = planted_fixture(71, 100, 3, 40, |_| QuestionKind::Hit, |_| 0);
    let (_dir, index, silver) = prepare(&fx);
    assert_eq!(silver.len(), 40);
    for (rec, src) in silver.iter().zip(&fx.planted) {
        assert_eq!(&rec.source(), src);
    }

    let ks = [1, 5, 10, 20];
    let report = evaluate_retrieval(&fx.corpus, &silver, &index, &ks, OrderWeights::default()).unwrap();
    let brute = BruteBm25::new(&fx.paragraphs);
    for (k, row) in ks.iter().zip(&report.table.rows) {
        let oracle = fx
            .corpus
            .iter()
            .zip(&fx.planted)
            .filter(|(q, src)| {
                first_relevant_rank(&brute, &q.question_tokens, &HashSet::from([src.paragraph()]), *k).is_some()
            })
            .count();
        assert_eq!(row.correct, oracle, "k = {k}");
        assert_eq!(row.accuracy, 100.0, "k = {k}");
    }
    assert!(accuracy_monotonicity_check(&report.table));
    assert_eq!(report.table.excluded, 0);
}

#[test]
fn accuracy_matches_oracle_on_mixed_questions() {
    let (fx, _) = split_fixture(81, 100, 3, 40, 5);
    let (_dir, index, silver) = prepare(&fx);
    let ks = [1, 3, 5, 10];
    let report = evaluate_retrieval(&fx.corpus, &silver, &index, &ks, OrderWeights::default()).unwrap();
    let brute = BruteBm25::new(&fx.paragraphs);
    for (res, (q, src)) in report.results.iter().zip(fx.corpus.iter().zip(&fx.planted)) {
        assert_eq!(res.question_id, q.question_id);
        let oracle = first_relevant_rank(&brute, &q.question_tokens, &HashSet::from([src.paragraph()]), 10);
        assert_eq!(res.first_correct_rank, oracle, "{}", q.question_id);
    }
    assert_eq!(report.table.rows[2].accuracy, 30.0);
    assert!(accuracy_monotonicity_check(&report.table));
}

#[test]
fn triggering_dataset_gold_less_share() {
    let k = 5;
    let (fx, _) = split_fixture(91, 100, 3, 50, k);
    let (_dir, index, silver) = prepare(&fx);
    let ds = build_triggering_dataset(&fx.corpus, &silver, &index, k, OrderWeights::default()).unwrap();
    assert_eq!(ds.stats.questions, 50);
    assert_eq!(ds.stats.gold_less, 35);
    assert_eq!(ds.stats.gold_less_pct, 70.0);

    let brute = BruteBm25::new(&fx.paragraphs);
    let by_key = fx.by_key();
    for ((entry, src), kind) in ds.entries.iter().zip(&fx.planted).zip(&fx.kinds) {
        assert_eq!(entry.has_gold(), *kind == QuestionKind::Hit);
        let golds: Vec<_> = entry.golds().map(|c| c.source_ref.clone().unwrap()).collect();
        if entry.has_gold() {
            assert_eq!(golds, vec![src.clone()]);
        }
        let expected: Vec<Vec<String>> = brute
            .rank(
                &fx.corpus
                    .iter()
                    .find(|q| q.question_id == entry.question_id)
                    .unwrap()
                    .question_tokens,
                [1.0; 3],
            )
            .into_iter()
            .take(k)
            .flat_map(|(key, _)| by_key[&key].sentences.iter().map(|s| s.tokens.clone()))
            .collect();
        let got: Vec<Vec<String>> = entry.candidates.iter().map(|c| c.tokens.clone()).collect();
        assert_eq!(got, expected, "{}", entry.question_id);
    }
}
