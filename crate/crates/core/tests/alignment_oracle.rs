mod common;

use common::{align_oracle, planted_fixture, weighted, BruteBm25, Gen, QuestionKind};
use qacorpus::align::{align_answer, best_match, load_silver, write_silver};
use qacorpus::index::{NGramIndex, OrderWeights};
use qacorpus::{build_index, build_silver_dataset, weighted_similarity, AlignmentConfig, IndexSettings};

#[test]
fn paraphrased_answers_match_restricted_oracle() {
    let fx = planted_fixture(21, 250, 4, 50, |_| QuestionKind::Hit, |i| i % 7);
    assert_eq!(fx.paragraphs.len(), 1000);
    let dir = tempfile::tempdir().unwrap();
    build_index(
        fx.paragraphs.iter().cloned().map(Ok),
        dir.path(),
        &IndexSettings::default(),
    )
    .unwrap();
    let index = NGramIndex::open(dir.path()).unwrap();
    let brute = BruteBm25::new(&fx.paragraphs);
    let by_key = fx.by_key();
    let cfg = AlignmentConfig::default();

    let mut expected_records = Vec::new();
    for entry in &fx.corpus {
        let gold = entry.golds().next().unwrap();
        let oracle = align_oracle(&brute, &by_key, &gold.tokens, cfg.lambdas(), cfg.top_m()).unwrap();
        let got = best_match(&gold.tokens, &index, &cfg, OrderWeights::default())
            .unwrap()
            .unwrap();
        assert_eq!(got.source.paragraph(), oracle.key, "{}", entry.question_id);
        assert_eq!(got.source.sent_index, oracle.sent_index);
        assert!((got.similarity.t - oracle.t).abs() <= 1e-9);

        let rec = align_answer(&entry.question_id, gold, &index, &cfg, OrderWeights::default()).unwrap();
        assert_eq!(rec.is_some(), oracle.t >= cfg.theta());
        if let Some(r) = rec {
            expected_records.push(r);
        }
    }

    let silver = build_silver_dataset(&fx.corpus, &index, &cfg, OrderWeights::default(), &[0.3, 0.4, 0.5]).unwrap();
    assert_eq!(silver.records, expected_records);
    assert_eq!(silver.stats.total_gold, 50);
    assert_eq!(silver.stats.gamma_c, expected_records.len());
    let g: Vec<usize> = silver.sweep.iter().map(|s| s.gamma_c).collect();
    assert!(g[0] >= g[1] && g[1] >= g[2], "{g:?}");
    assert_eq!(g[1], silver.stats.gamma_c);

    let out = dir.path().join("silver.jsonl");
    write_silver(&out, Some(r#"{"provenance":{}}"#), &silver.records).unwrap();
    assert_eq!(load_silver(&out).unwrap(), silver.records);
}

#[test]
fn weighted_similarity_matches_count_vector_oracle() {
    let mut gen = Gen::new(31, 40);
    let cfg = AlignmentConfig::new([0.2, 0.3, 0.5], 0.4, 5).unwrap();
    for _ in 0..300 {
        let a = gen.words(1, 15);
        let b = gen.words(1, 15);
        let got = weighted_similarity(&a, &b, &cfg).t;
        assert!((got - weighted(&a, &b, cfg.lambdas())).abs() <= 1e-9, "{a:?} {b:?}");
    }
}
