//! On-disk inverted index over paragraphs for n-gram orders 1 to 3.
//!
//! Each order is an independent field with its own term dictionary and
//! postings file. A query is scored per order with BM25 and the per-order
//! scores are combined with [`OrderWeights`].
//!
//! Directory layout: `meta.json`, `terms.<o>.dict`, `postings.<o>.bin`,
//! `store.bin`, `store.idx`. See [`format`] for the byte layout.

mod build;
pub mod format;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::{Paragraph, ParagraphKey};
use crate::error::{Error, Result};
use crate::text::{self, TokenizerConfig, MAX_ORDER, ORDERS};

pub use build::{build_index, IndexSettings};
use format::TermInfo;

pub const META_FILE: &str = "meta.json";
pub const STORE_FILE: &str = "store.bin";
pub const STORE_IDX_FILE: &str = "store.idx";

pub fn dict_file(order: usize) -> String {
    format!("terms.{order}.dict")
}

pub fn postings_file(order: usize) -> String {
    format!("postings.{order}.bin")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`; positive for every df ≤ N.
    pub fn idf(&self, n_docs: u64, doc_freq: u32) -> f64 {
        let n = n_docs as f64;
        let df = f64::from(doc_freq);
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Saturated term-frequency component.
    pub fn tf_norm(&self, tf: u32, doc_len: u32, avg_doc_len: f64) -> f64 {
        let tf = f64::from(tf);
        let rel_len = if avg_doc_len > 0.0 {
            f64::from(doc_len) / avg_doc_len
        } else {
            0.0
        };
        tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * rel_len))
    }
}

/// Per-order weights of the summed BM25 score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct OrderWeights([f64; 3]);

impl OrderWeights {
    pub fn new(weights: [f64; 3]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!(
                "order weights must be finite and non-negative, got {weights:?}"
            )));
        }
        if weights.iter().all(|w| *w == 0.0) {
            return Err(Error::invalid("order weights must not all be zero"));
        }
        Ok(Self(weights))
    }

    pub fn get(&self, order: usize) -> f64 {
        self.0[order - 1]
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }
}

impl Default for OrderWeights {
    fn default() -> Self {
        Self([1.0, 1.0, 1.0])
    }
}

impl TryFrom<[f64; 3]> for OrderWeights {
    type Error = Error;
    fn try_from(w: [f64; 3]) -> Result<Self> {
        Self::new(w)
    }
}

impl From<OrderWeights> for [f64; 3] {
    fn from(w: OrderWeights) -> Self {
        w.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub format_version: u32,
    pub tokenizer: TokenizerConfig,
    pub orders: Vec<usize>,
    pub paragraph_count: u64,
    /// Mean number of n-grams per paragraph, per order.
    pub avg_doc_len: [f64; 3],
    pub total_ngrams: [u64; 3],
    pub term_count: [u64; 3],
    pub bm25: Bm25Params,
    /// Minimum document frequency kept per order; 1 keeps everything.
    pub min_df: [u32; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub doc_id: String,
    pub para_index: u32,
    pub score: f64,
    pub rank: usize,
}

impl RetrievalHit {
    pub fn key(&self) -> ParagraphKey {
        ParagraphKey {
            doc_id: self.doc_id.clone(),
            para_index: self.para_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostingsList {
    pub order: usize,
    pub term: String,
    /// `(paragraph ordinal, term frequency)`, strictly increasing ordinals.
    pub entries: Vec<(u32, u32)>,
}

struct OrderField {
    terms: Vec<(String, TermInfo)>,
    postings: File,
    postings_path: PathBuf,
}

/// A read-only index. Safe to share between threads.
pub struct NGramIndex {
    dir: PathBuf,
    meta: IndexMeta,
    fields: Vec<OrderField>,
    store: File,
    store_len: u64,
    /// `(record offset, [len_1, len_2, len_3])` per ordinal.
    entries: Vec<(u64, [u32; 3])>,
    keys: OnceLock<Result<HashMap<ParagraphKey, u32>, String>>,
}

impl std::fmt::Debug for NGramIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NGramIndex")
            .field("dir", &self.dir)
            .field("meta", &self.meta)
            .finish_non_exhaustive()
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn check_header(path: &Path, bytes: &[u8], magic: &[u8; 4]) -> Result<()> {
    if bytes.len() < 8 || &bytes[..4] != magic {
        return Err(Error::corrupt(path, "bad magic"));
    }
    let version = format::u32_at(bytes, 4).unwrap_or(0);
    if version != format::FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: version,
            expected: format::FORMAT_VERSION,
        });
    }
    Ok(())
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
fn read_exact_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        match file.seek_read(buf, offset)? {
            0 => return Err(std::io::ErrorKind::UnexpectedEof.into()),
            n => {
                buf = &mut buf[n..];
                offset += n as u64;
            }
        }
    }
    Ok(())
}

impl NGramIndex {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let meta_path = dir.join(META_FILE);
        let meta_bytes = read_file(&meta_path)?;
        let raw: serde_json::Value =
            serde_json::from_slice(&meta_bytes).map_err(|e| Error::corrupt(&meta_path, e.to_string()))?;
        let version = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != format::FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: version,
                expected: format::FORMAT_VERSION,
            });
        }
        let meta: IndexMeta = serde_json::from_value(raw).map_err(|e| Error::corrupt(&meta_path, e.to_string()))?;

        let mut fields = Vec::with_capacity(MAX_ORDER);
        for order in ORDERS {
            let dict_path = dir.join(dict_file(order));
            let bytes = read_file(&dict_path)?;
            check_header(&dict_path, &bytes, format::DICT_MAGIC)?;
            let count = format::u64_at(&bytes, 12).ok_or_else(|| Error::corrupt(&dict_path, "truncated header"))?;
            let terms = format::decode_dict(&bytes[format::DICT_HEADER_LEN..], count)
                .ok_or_else(|| Error::corrupt(&dict_path, "undecodable term dictionary"))?;

            let postings_path = dir.join(postings_file(order));
            let postings = File::open(&postings_path).map_err(|e| Error::io(&postings_path, e))?;
            let mut head = [0u8; format::POSTINGS_HEADER_LEN];
            read_exact_at(&postings, &mut head, 0).map_err(|e| Error::io(&postings_path, e))?;
            check_header(&postings_path, &head, format::POSTINGS_MAGIC)?;
            fields.push(OrderField {
                terms,
                postings,
                postings_path,
            });
        }

        let idx_path = dir.join(STORE_IDX_FILE);
        let idx = read_file(&idx_path)?;
        check_header(&idx_path, &idx, format::STORE_IDX_MAGIC)?;
        let count = format::u64_at(&idx, 8).ok_or_else(|| Error::corrupt(&idx_path, "truncated"))?;
        if count != meta.paragraph_count
            || idx.len() != format::STORE_IDX_HEADER_LEN + count as usize * format::STORE_IDX_ENTRY_LEN
        {
            return Err(Error::corrupt(&idx_path, "entry count disagrees with meta.json"));
        }
        let entries = idx[format::STORE_IDX_HEADER_LEN..]
            .chunks_exact(format::STORE_IDX_ENTRY_LEN)
            .map(|c| {
                let off = format::u64_at(c, 0).unwrap_or(0);
                let lens = [
                    format::u32_at(c, 8).unwrap_or(0),
                    format::u32_at(c, 12).unwrap_or(0),
                    format::u32_at(c, 16).unwrap_or(0),
                ];
                (off, lens)
            })
            .collect();

        let store_path = dir.join(STORE_FILE);
        let store = File::open(&store_path).map_err(|e| Error::io(&store_path, e))?;
        let store_len = store.metadata().map_err(|e| Error::io(&store_path, e))?.len();
        let mut head = [0u8; format::STORE_HEADER_LEN];
        read_exact_at(&store, &mut head, 0).map_err(|e| Error::io(&store_path, e))?;
        check_header(&store_path, &head, format::STORE_MAGIC)?;

        Ok(Self {
            dir,
            meta,
            fields,
            store,
            store_len,
            entries,
            keys: OnceLock::new(),
        })
    }

    /// Opens the index and refuses it unless it was built with `cfg`.
    pub fn open_with(dir: impl AsRef<Path>, cfg: &TokenizerConfig) -> Result<Self> {
        let index = Self::open(dir)?;
        index.check_tokenizer(cfg)?;
        Ok(index)
    }

    pub fn check_tokenizer(&self, cfg: &TokenizerConfig) -> Result<()> {
        if &self.meta.tokenizer == cfg {
            Ok(())
        } else {
            Err(Error::TokenizerMismatch {
                index: self.meta.tokenizer,
                query: *cfg,
            })
        }
    }

    pub fn meta(&self) -> &IndexMeta {
        &self.meta
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_len(&self, ordinal: u32, order: usize) -> u32 {
        self.entries[ordinal as usize].1[order - 1]
    }

    fn term_info(&self, order: usize, term: &str) -> Option<TermInfo> {
        let terms = &self.fields[order - 1].terms;
        terms
            .binary_search_by(|(t, _)| t.as_str().cmp(term))
            .ok()
            .map(|i| terms[i].1)
    }

    /// Number of distinct terms stored for `order`.
    pub fn term_count(&self, order: usize) -> usize {
        self.fields[order - 1].terms.len()
    }

    /// Terms of `order` in dictionary (byte) order.
    pub fn terms(&self, order: usize) -> impl Iterator<Item = &str> + '_ {
        self.fields[order - 1].terms.iter().map(|(t, _)| t.as_str())
    }

    fn read_postings(&self, order: usize, info: TermInfo) -> Result<Vec<(u32, u32)>> {
        let field = &self.fields[order - 1];
        let mut buf = vec![0u8; info.len as usize];
        read_exact_at(&field.postings, &mut buf, info.offset).map_err(|e| Error::io(&field.postings_path, e))?;
        format::decode_postings(&buf)
            .filter(|p| p.len() == info.doc_freq as usize)
            .ok_or_else(|| Error::corrupt(&field.postings_path, "undecodable postings list"))
    }

    /// The postings of one n-gram, given as its tokens.
    pub fn postings<S: AsRef<str>>(&self, terms: &[S]) -> Result<Option<PostingsList>> {
        let order = terms.len();
        text::check_order(order)?;
        let term = terms.iter().map(|t| t.as_ref()).collect::<Vec<_>>().join(" ");
        match self.term_info(order, &term) {
            None => Ok(None),
            Some(info) => Ok(Some(PostingsList {
                order,
                entries: self.read_postings(order, info)?,
                term,
            })),
        }
    }

    fn record(&self, ordinal: u32) -> Result<Vec<u8>> {
        let i = ordinal as usize;
        let (start, _) = *self
            .entries
            .get(i)
            .ok_or_else(|| Error::NotFound(format!("paragraph ordinal {ordinal}")))?;
        let end = self.entries.get(i + 1).map_or(self.store_len, |e| e.0);
        let path = self.dir.join(STORE_FILE);
        if end < start || end > self.store_len {
            return Err(Error::corrupt(path, "record offsets out of range"));
        }
        let mut buf = vec![0u8; (end - start) as usize];
        read_exact_at(&self.store, &mut buf, start).map_err(|e| Error::io(&path, e))?;
        Ok(buf)
    }

    /// The paragraph stored under `ordinal` (assignment order at build).
    pub fn paragraph(&self, ordinal: u32) -> Result<Paragraph> {
        let buf = self.record(ordinal)?;
        format::decode_paragraph(&buf).ok_or_else(|| Error::corrupt(self.dir.join(STORE_FILE), "undecodable record"))
    }

    pub fn key(&self, ordinal: u32) -> Result<ParagraphKey> {
        let buf = self.record(ordinal)?;
        format::decode_key(&buf).ok_or_else(|| Error::corrupt(self.dir.join(STORE_FILE), "undecodable record key"))
    }

    fn key_map(&self) -> Result<&HashMap<ParagraphKey, u32>> {
        let built = self.keys.get_or_init(|| {
            (0..self.entries.len() as u32)
                .map(|o| self.key(o).map(|k| (k, o)))
                .collect::<Result<HashMap<_, _>>>()
                .map_err(|e| e.to_string())
        });
        built
            .as_ref()
            .map_err(|m| Error::corrupt(self.dir.join(STORE_FILE), m.clone()))
    }

    pub fn ordinal_of(&self, doc_id: &str, para_index: u32) -> Result<u32> {
        let key = ParagraphKey {
            doc_id: doc_id.to_string(),
            para_index,
        };
        self.key_map()?
            .get(&key)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("paragraph {key}")))
    }

    pub fn get_paragraph(&self, doc_id: &str, para_index: u32) -> Result<Paragraph> {
        self.paragraph(self.ordinal_of(doc_id, para_index)?)
    }

    /// Top-`k` paragraphs by `Σ_o w_o · BM25_o(query, paragraph)`.
    ///
    /// Only paragraphs sharing at least one n-gram with the query in a
    /// positively weighted order are returned. Ties on score are broken by
    /// `(doc_id, para_index)` ascending, so `search(k)` is always a prefix
    /// of `search(k + 1)`.
    pub fn search<S: AsRef<str>>(
        &self,
        query_tokens: &[S],
        k: usize,
        weights: OrderWeights,
    ) -> Result<Vec<RetrievalHit>> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let scores = self.score_all(query_tokens, weights)?;
        self.top_k(scores, k)
    }

    /// Accumulates scores per ordinal. Contributions are added in
    /// ascending `(order, term)` order so results are bit-reproducible.
    fn score_all<S: AsRef<str>>(&self, query_tokens: &[S], weights: OrderWeights) -> Result<HashMap<u32, f64>> {
        let n = self.meta.paragraph_count;
        let bm25 = self.meta.bm25;
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for order in ORDERS {
            let w = weights.get(order);
            if w == 0.0 {
                continue;
            }
            let avg = self.meta.avg_doc_len[order - 1];
            let query: BTreeMap<String, u32> = text::ngram_keys(query_tokens, order);
            for (term, qtf) in &query {
                let Some(info) = self.term_info(order, term) else {
                    continue;
                };
                let idf = bm25.idf(n, info.doc_freq);
                for (ord, tf) in self.read_postings(order, info)? {
                    let dl = self.doc_len(ord, order);
                    let contribution = w * f64::from(*qtf) * idf * bm25.tf_norm(tf, dl, avg);
                    *acc.entry(ord).or_insert(0.0) += contribution;
                }
            }
        }
        Ok(acc)
    }

    fn top_k(&self, scores: HashMap<u32, f64>, k: usize) -> Result<Vec<RetrievalHit>> {
        let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        if ranked.is_empty() {
            return Ok(Vec::new());
        }
        // Everything tied with the k-th score competes on key order.
        let cutoff = ranked[(k - 1).min(ranked.len() - 1)].1;
        let boundary = ranked.partition_point(|&(_, s)| s >= cutoff);
        let mut keyed = ranked[..boundary]
            .iter()
            .map(|&(ord, s)| Ok((s, self.key(ord)?)))
            .collect::<Result<Vec<_>>>()?;
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        keyed.truncate(k);
        Ok(keyed
            .into_iter()
            .enumerate()
            .map(|(i, (score, key))| RetrievalHit {
                doc_id: key.doc_id,
                para_index: key.para_index,
                score,
                rank: i + 1,
            })
            .collect())
    }
}
