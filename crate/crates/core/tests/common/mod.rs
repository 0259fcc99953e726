//! Seeded fixture generation and brute-force oracles shared by the
//! integration tests. The oracles recompute everything from raw token
//! lists and never touch the index files.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use qacorpus::{Candidate, CorpusTag, Paragraph, ParagraphKey, QAEntry, SourceRef, TokenizerConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

pub struct Gen {
    pub rng: ChaCha8Rng,
    pub vocab: Vec<String>,
}

impl Gen {
    /// Vocabulary of consonant-vowel words of 2 to 4 syllables.
    pub fn new(seed: u64, vocab_size: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::new();
        let mut vocab = Vec::with_capacity(vocab_size);
        while vocab.len() < vocab_size {
            let syllables = rng.gen_range(2..=4);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
                w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
            }
            if seen.insert(w.clone()) {
                vocab.push(w);
            }
        }
        Self { rng, vocab }
    }

    /// Skewed towards the head of the vocabulary so document frequencies vary.
    pub fn word(&mut self) -> String {
        let u: f64 = self.rng.gen();
        let i = ((self.vocab.len() as f64) * u * u) as usize;
        self.vocab[i.min(self.vocab.len() - 1)].clone()
    }

    /// A word that never occurs in the vocabulary.
    pub fn novel_word(&mut self) -> String {
        let n: u32 = self.rng.gen();
        format!("xq{n}")
    }

    pub fn words(&mut self, min: usize, max: usize) -> Vec<String> {
        let n = self.rng.gen_range(min..=max);
        (0..n).map(|_| self.word()).collect()
    }

    pub fn sentences(&mut self, min_sent: usize, max_sent: usize) -> Vec<String> {
        let n = self.rng.gen_range(min_sent..=max_sent);
        (0..n).map(|_| sentence(&self.words(6, 12))).collect()
    }

    pub fn paragraph(&mut self, min_sent: usize, max_sent: usize) -> String {
        self.sentences(min_sent, max_sent).join(" ")
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}

/// Capitalized, space-joined, full stop at the end.
pub fn sentence(words: &[String]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        let upper = first.to_uppercase();
        s.replace_range(..1, &upper);
    }
    s.push('.');
    s
}

#[derive(Debug, Clone)]
pub struct Article {
    pub id: String,
    pub title: String,
    pub paragraphs: Vec<String>,
}

pub fn articles(gen: &mut Gen, count: usize, paras: usize) -> Vec<Article> {
    (0..count)
        .map(|i| Article {
            id: format!("a{i:05}"),
            title: format!("Title {i}"),
            paragraphs: (0..paras).map(|_| gen.paragraph(2, 4)).collect(),
        })
        .collect()
}

pub fn write_dump(path: &Path, articles: &[Article]) {
    let mut out = String::new();
    for a in articles {
        let line = serde_json::json!({
            "id": a.id,
            "title": a.title,
            "text": a.paragraphs.join("\n\n"),
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    fs::write(path, out).unwrap();
}

pub fn to_paragraphs(articles: &[Article]) -> Vec<Paragraph> {
    let cfg = TokenizerConfig::default();
    articles
        .iter()
        .flat_map(|a| {
            a.paragraphs
                .iter()
                .enumerate()
                .map(|(i, p)| Paragraph::from_text(a.id.clone(), i as u32, a.title.clone(), p, &cfg).unwrap())
        })
        .collect()
}

pub fn tokens(text: &str) -> Vec<String> {
    qacorpus::tokenize(text, &TokenizerConfig::default())
}

fn grams(tokens: &[String], order: usize) -> BTreeMap<String, u32> {
    let mut m = BTreeMap::new();
    if tokens.len() >= order {
        for i in 0..=tokens.len() - order {
            *m.entry(tokens[i..i + order].join(" ")).or_insert(0) += 1;
        }
    }
    m
}

/// Full-scan BM25 over raw paragraphs.
pub struct BruteBm25 {
    pub keys: Vec<ParagraphKey>,
    tf: Vec<[HashMap<String, u32>; 3]>,
    len: Vec<[u32; 3]>,
    df: [HashMap<String, u32>; 3],
    avg: [f64; 3],
    k1: f64,
    b: f64,
}

impl BruteBm25 {
    pub fn new(paras: &[Paragraph]) -> Self {
        let mut tf = Vec::new();
        let mut len = Vec::new();
        let mut df: [HashMap<String, u32>; 3] = Default::default();
        let mut total = [0u64; 3];
        for p in paras {
            let toks: Vec<String> = p.sentences.iter().flat_map(|s| s.tokens.clone()).collect();
            let g = [1, 2, 3].map(|o| grams(&toks, o).into_iter().collect::<HashMap<_, _>>());
            let mut l = [0u32; 3];
            for o in 0..3 {
                l[o] = g[o].values().sum();
                total[o] += u64::from(l[o]);
                for term in g[o].keys() {
                    *df[o].entry(term.clone()).or_insert(0) += 1;
                }
            }
            tf.push(g);
            len.push(l);
        }
        let n = paras.len() as f64;
        let avg = [0, 1, 2].map(|o| if paras.is_empty() { 0.0 } else { total[o] as f64 / n });
        Self {
            keys: paras.iter().map(|p| p.key()).collect(),
            tf,
            len,
            df,
            avg,
            k1: 1.2,
            b: 0.75,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    /// Every paragraph with a positive score, best first, ties by key.
    pub fn rank(&self, query: &[String], weights: [f64; 3]) -> Vec<(ParagraphKey, f64)> {
        let n = self.keys.len() as f64;
        let mut score = vec![0.0f64; self.keys.len()];
        let mut touched = vec![false; self.keys.len()];
        for o in 0..3 {
            if weights[o] == 0.0 {
                continue;
            }
            for (term, qtf) in grams(query, o + 1) {
                let Some(&df) = self.df[o].get(&term) else { continue };
                let df = f64::from(df);
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                for (i, doc) in self.tf.iter().enumerate() {
                    let Some(&tf) = doc[o].get(&term) else { continue };
                    let tf = f64::from(tf);
                    let rel = if self.avg[o] > 0.0 {
                        f64::from(self.len[i][o]) / self.avg[o]
                    } else {
                        0.0
                    };
                    let norm = tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * rel));
                    score[i] += weights[o] * f64::from(qtf) * idf * norm;
                    touched[i] = true;
                }
            }
        }
        let mut out: Vec<(ParagraphKey, f64)> = (0..self.keys.len())
            .filter(|&i| touched[i] && score[i] > 0.0)
            .map(|i| (self.keys[i].clone(), score[i]))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

fn count_vector(tokens: &[String], order: usize) -> HashMap<Vec<String>, f64> {
    let mut m = HashMap::new();
    if tokens.len() >= order {
        for w in tokens.windows(order) {
            *m.entry(w.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    m
}

/// Plain floating-point cosine of n-gram count vectors.
pub fn cosine(a: &[String], b: &[String], order: usize) -> f64 {
    let va = count_vector(a, order);
    let vb = count_vector(b, order);
    let dot: f64 = va.iter().map(|(g, x)| x * vb.get(g).copied().unwrap_or(0.0)).sum();
    let na: f64 = va.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = vb.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn weighted(a: &[String], b: &[String], lambdas: [f64; 3]) -> f64 {
    (1..=3).map(|o| lambdas[o - 1] * cosine(a, b, o)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMatch {
    pub key: ParagraphKey,
    pub sent_index: u32,
    pub t: f64,
}

/// Best sentence over the brute-force top-m paragraphs, ties to the
/// better rank and then the earlier sentence.
pub fn align_oracle(
    brute: &BruteBm25,
    paras: &HashMap<ParagraphKey, &Paragraph>,
    answer: &[String],
    lambdas: [f64; 3],
    top_m: usize,
) -> Option<OracleMatch> {
    let mut best: Option<OracleMatch> = None;
    for (key, _) in brute.rank(answer, [1.0, 1.0, 1.0]).into_iter().take(top_m) {
        for s in &paras[&key].sentences {
            let t = weighted(answer, &s.tokens, lambdas);
            if best.as_ref().is_none_or(|b| t > b.t) {
                best = Some(OracleMatch {
                    key: key.clone(),
                    sent_index: s.sent_index,
                    t,
                });
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuestionKind {
    /// Question words copied from the planted sentence.
    Hit,
    /// Question words taken from an unrelated paragraph.
    Miss,
}

pub struct Fixture {
    pub articles: Vec<Article>,
    pub paragraphs: Vec<Paragraph>,
    pub corpus: Vec<QAEntry>,
    /// Where each question's original answer sentence was planted.
    pub planted: Vec<SourceRef>,
    /// The planted sentence tokens (before any substitution).
    pub planted_tokens: Vec<Vec<String>>,
    pub kinds: Vec<QuestionKind>,
}

/// A dump of `n_articles × paras` paragraphs with one fresh answer sentence
/// planted in each of `questions` distinct paragraphs. The corpus gold for
/// question `i` is the planted sentence with `substitute(i)` of its words
/// replaced by unseen words.
pub fn planted_fixture(
    seed: u64,
    n_articles: usize,
    paras: usize,
    questions: usize,
    kind: impl Fn(usize) -> QuestionKind,
    substitute: impl Fn(usize) -> usize,
) -> Fixture {
    let mut gen = Gen::new(seed, 4000);
    let mut sents: Vec<Vec<Vec<String>>> = (0..n_articles)
        .map(|_| (0..paras).map(|_| gen.sentences(2, 4)).collect())
        .collect();
    let mut slots: Vec<(usize, usize)> = (0..n_articles).flat_map(|a| (0..paras).map(move |p| (a, p))).collect();
    slots.shuffle(&mut gen.rng);
    assert!(questions <= slots.len());

    let cfg = TokenizerConfig::default();
    let mut corpus = Vec::new();
    let mut planted = Vec::new();
    let mut planted_tokens = Vec::new();
    let mut kinds = Vec::new();
    for (i, &(a, p)) in slots.iter().take(questions).enumerate() {
        let words = gen.words(10, 14);
        let text = sentence(&words);
        let at = gen.below(sents[a][p].len() + 1);
        sents[a][p].insert(at, text);
        planted.push(SourceRef {
            doc_id: format!("a{a:05}"),
            para_index: p as u32,
            sent_index: at as u32,
        });
        planted_tokens.push(words.clone());

        let mut gold_words = words.clone();
        let subs = substitute(i).min(gold_words.len());
        let mut positions: Vec<usize> = (0..gold_words.len()).collect();
        positions.shuffle(&mut gen.rng);
        for &pos in positions.iter().take(subs) {
            gold_words[pos] = gen.novel_word();
        }

        let k = kind(i);
        let q_words: Vec<String> = match k {
            QuestionKind::Hit => {
                let start = gen.below(words.len() - 5);
                words[start..start + 5].to_vec()
            }
            QuestionKind::Miss => {
                let (oa, op) = slots[slots.len() - 1 - i];
                let other = &sents[oa][op][0];
                tokens(other).into_iter().take(4).collect()
            }
        };
        let question = format!("what {}?", q_words.join(" "));
        let mut candidates = vec![
            Candidate::new(&sentence(&gold_words), true, &cfg),
            Candidate::new(&sentence(&gen.words(6, 10)), false, &cfg),
            Candidate::new(&sentence(&gen.words(6, 10)), false, &cfg),
        ];
        candidates.shuffle(&mut gen.rng);
        corpus.push(QAEntry::new(
            format!("q{i:04}"),
            &question,
            CorpusTag::Other,
            candidates,
            &cfg,
        ));
        kinds.push(k);
    }

    let articles: Vec<Article> = sents
        .into_iter()
        .enumerate()
        .map(|(a, ps)| Article {
            id: format!("a{a:05}"),
            title: format!("Title {a}"),
            paragraphs: ps.into_iter().map(|s| s.join(" ")).collect(),
        })
        .collect();
    let paragraphs = to_paragraphs(&articles);
    let by_key: HashMap<ParagraphKey, &Paragraph> = paragraphs.iter().map(|p| (p.key(), p)).collect();
    for (src, toks) in planted.iter().zip(&planted_tokens) {
        let para = by_key[&src.paragraph()];
        assert_eq!(
            &para.sentences[src.sent_index as usize].tokens, toks,
            "planting misparsed"
        );
    }
    Fixture {
        articles,
        paragraphs,
        corpus,
        planted,
        planted_tokens,
        kinds,
    }
}

impl Fixture {
    pub fn by_key(&self) -> HashMap<ParagraphKey, &Paragraph> {
        self.paragraphs.iter().map(|p| (p.key(), p)).collect()
    }
}

/// 1-based rank of the first relevant paragraph within the brute-force top k.
pub fn first_relevant_rank(
    brute: &BruteBm25,
    query: &[String],
    relevant: &HashSet<ParagraphKey>,
    k: usize,
) -> Option<usize> {
    brute
        .rank(query, [1.0, 1.0, 1.0])
        .into_iter()
        .take(k)
        .position(|(key, _)| relevant.contains(&key))
        .map(|p| p + 1)
}

pub fn three_in_ten(i: usize) -> QuestionKind {
    if i % 10 < 3 {
        QuestionKind::Hit
    } else {
        QuestionKind::Miss
    }
}

/// A 30% hit / 70% miss fixture whose split the brute-force ranker
/// confirms at depth `k`: every hit question finds its planted paragraph
/// in the top k and no miss question does. Tries successive seeds.
pub fn split_fixture(seed: u64, n_articles: usize, paras: usize, questions: usize, k: usize) -> (Fixture, u64) {
    for s in seed..seed + 50 {
        let fx = planted_fixture(s, n_articles, paras, questions, three_in_ten, |_| 0);
        let brute = BruteBm25::new(&fx.paragraphs);
        let ok = fx
            .corpus
            .iter()
            .zip(&fx.planted)
            .zip(&fx.kinds)
            .all(|((q, src), kind)| {
                let relevant = HashSet::from([src.paragraph()]);
                let found = first_relevant_rank(&brute, &q.question_tokens, &relevant, k).is_some();
                found == (*kind == QuestionKind::Hit)
            });
        if ok {
            return (fx, s);
        }
    }
    panic!("no seed in range gives a clean split");
}
