use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::format::{self, DictEncoder, TermInfo};
use super::{dict_file, postings_file, Bm25Params, IndexMeta, META_FILE, STORE_FILE, STORE_IDX_FILE};
use crate::corpus::Paragraph;
use crate::error::{Error, Result};
use crate::text::{self, TokenizerConfig, ORDERS};

const RUNS_DIR: &str = ".runs";
/// Shards inverted concurrently per wave. Shard boundaries depend only on
/// `shard_size`, never on the worker count.
const SHARDS_PER_WAVE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSettings {
    pub tokenizer: TokenizerConfig,
    pub bm25: Bm25Params,
    /// Minimum document frequency per order. Order 1 is always kept whole.
    pub min_df: [u32; 3],
    /// Paragraphs per inversion shard.
    pub shard_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl Default for IndexSettings {
    fn default() -> Self {
        Self {
            tokenizer: TokenizerConfig::default(),
            bm25: Bm25Params::default(),
            min_df: [1, 1, 1],
            shard_size: 4096,
            provenance: None,
        }
    }
}

/// Builds an index in `out_dir` from paragraphs in arrival order.
///
/// Shards of `shard_size` paragraphs are inverted in parallel and spilled
/// as sorted runs, then merged per order. Ordinals grow across shards, so
/// concatenating a term's runs in shard order keeps its postings sorted;
/// the output bytes do not depend on the number of worker threads.
///
/// On any error the files written so far are removed.
pub fn build_index<I>(paragraphs: I, out_dir: &Path, settings: &IndexSettings) -> Result<IndexMeta>
where
    I: IntoIterator<Item = Result<Paragraph>>,
{
    if settings.shard_size == 0 {
        return Err(Error::invalid("shard_size must be positive"));
    }
    if settings.min_df.contains(&0) {
        return Err(Error::invalid("min_df entries must be at least 1"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut builder = Builder::new(out_dir, settings)?;
    let result = builder.run(paragraphs);
    let runs = out_dir.join(RUNS_DIR);
    if runs.exists() {
        let _ = fs::remove_dir_all(&runs);
    }
    if result.is_err() {
        builder.cleanup();
    }
    result
}

struct Builder<'a> {
    out_dir: PathBuf,
    settings: &'a IndexSettings,
    created: Vec<PathBuf>,
    runs: Vec<[PathBuf; 3]>,
}

/// Inverted shard for one order: term -> postings in ordinal order.
type Inversion = BTreeMap<String, Vec<(u32, u32)>>;

impl<'a> Builder<'a> {
    fn new(out_dir: &Path, settings: &'a IndexSettings) -> Result<Self> {
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            settings,
            created: Vec::new(),
            runs: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.out_dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.created.push(path.clone());
        Ok((path, BufWriter::new(file)))
    }

    fn cleanup(&self) {
        for p in &self.created {
            let _ = fs::remove_file(p);
        }
    }

    fn run<I>(&mut self, paragraphs: I) -> Result<IndexMeta>
    where
        I: IntoIterator<Item = Result<Paragraph>>,
    {
        let cfg = self.settings;
        // Remove stale output from a previous build in the same directory.
        for name in [META_FILE, STORE_FILE, STORE_IDX_FILE] {
            let _ = fs::remove_file(self.out_dir.join(name));
        }
        let runs_dir = self.out_dir.join(RUNS_DIR);
        fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;

        let (store_path, mut store) = self.create(STORE_FILE)?;
        let (idx_path, mut idx) = self.create(STORE_IDX_FILE)?;
        let io_store = |e| Error::io(&store_path, e);
        store
            .write_all(&format::header(format::STORE_MAGIC, &[]))
            .map_err(io_store)?;
        idx.write_all(&format::header(format::STORE_IDX_MAGIC, &[0]))
            .map_err(|e| Error::io(&idx_path, e))?;

        let mut store_offset = format::STORE_HEADER_LEN as u64;
        let mut seen: HashSet<(String, u32)> = HashSet::new();
        let mut totals = [0u64; 3];
        let mut count: u32 = 0;
        let wave_len = cfg.shard_size * SHARDS_PER_WAVE;
        let mut wave: Vec<(u32, Vec<String>)> = Vec::with_capacity(wave_len.min(1 << 16));
        let mut record = Vec::new();

        for para in paragraphs {
            let para = para?;
            if !seen.insert((para.doc_id.clone(), para.para_index)) {
                return Err(Error::DuplicateParagraph {
                    doc_id: para.doc_id,
                    para_index: para.para_index,
                });
            }
            let tokens: Vec<String> = para.tokens().cloned().collect();
            let mut lens = [0u32; 3];
            for order in ORDERS {
                let n = text::ngram_count(tokens.len(), order);
                lens[order - 1] = u32::try_from(n).map_err(|_| Error::invalid("paragraph too long to index"))?;
                totals[order - 1] += n as u64;
            }
            record.clear();
            format::encode_paragraph(&para, &mut record);
            store.write_all(&record).map_err(io_store)?;
            let mut entry = Vec::with_capacity(format::STORE_IDX_ENTRY_LEN);
            entry.extend_from_slice(&store_offset.to_le_bytes());
            for l in lens {
                entry.extend_from_slice(&l.to_le_bytes());
            }
            idx.write_all(&entry).map_err(|e| Error::io(&idx_path, e))?;
            store_offset += record.len() as u64;

            wave.push((count, tokens));
            count = count
                .checked_add(1)
                .ok_or_else(|| Error::invalid("more than u32::MAX paragraphs"))?;
            if wave.len() == wave_len {
                self.spill_wave(&runs_dir, &mut wave)?;
            }
        }
        if !wave.is_empty() {
            self.spill_wave(&runs_dir, &mut wave)?;
        }
        store.flush().map_err(io_store)?;
        drop(store);
        idx.flush().map_err(|e| Error::io(&idx_path, e))?;
        let mut idx = idx.into_inner().map_err(|e| Error::io(&idx_path, e.into_error()))?;
        idx.seek(SeekFrom::Start(8))
            .and_then(|_| idx.write_all(&u64::from(count).to_le_bytes()))
            .map_err(|e| Error::io(&idx_path, e))?;

        let mut outputs = Vec::new();
        for order in ORDERS {
            outputs.push(self.out_dir.join(dict_file(order)));
            outputs.push(self.out_dir.join(postings_file(order)));
        }
        self.created.extend(outputs);
        let runs = &self.runs;
        let out_dir = &self.out_dir;
        let term_counts = ORDERS
            .par_iter()
            .map(|&order| {
                let min_df = if order == 1 { 1 } else { cfg.min_df[order - 1] };
                merge_order(out_dir, runs, order, min_df)
            })
            .collect::<Result<Vec<u64>>>()?;

        let n = u64::from(count);
        let mut avg = [0.0; 3];
        for o in 0..3 {
            avg[o] = if n == 0 { 0.0 } else { totals[o] as f64 / n as f64 };
        }
        let meta = IndexMeta {
            format_version: format::FORMAT_VERSION,
            tokenizer: cfg.tokenizer,
            orders: ORDERS.to_vec(),
            paragraph_count: n,
            avg_doc_len: avg,
            total_ngrams: totals,
            term_count: [term_counts[0], term_counts[1], term_counts[2]],
            bm25: cfg.bm25,
            min_df: [1, cfg.min_df[1], cfg.min_df[2]],
            provenance: cfg.provenance.clone(),
        };
        let (meta_path, mut w) = self.create(META_FILE)?;
        let mut body = serde_json::to_vec_pretty(&meta).expect("meta serializes");
        body.push(b'\n');
        w.write_all(&body)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&meta_path, e))?;
        info!(
            "indexed {} paragraphs into {} ({:?} terms)",
            n,
            self.out_dir.display(),
            meta.term_count
        );
        Ok(meta)
    }

    /// Inverts the buffered paragraphs shard by shard (in parallel) and
    /// writes one run file per shard and order, in shard order.
    fn spill_wave(&mut self, runs_dir: &Path, wave: &mut Vec<(u32, Vec<String>)>) -> Result<()> {
        let shard_size = self.settings.shard_size;
        let encoded: Vec<[Vec<u8>; 3]> = wave
            .par_chunks(shard_size)
            .map(|shard| {
                let inv = invert(shard);
                inv.map(|o| encode_run(&o))
            })
            .collect();
        for bufs in encoded {
            let shard_no = self.runs.len();
            let mut paths: [PathBuf; 3] = Default::default();
            for (o, buf) in bufs.iter().enumerate() {
                let path = runs_dir.join(format!("run-{shard_no:06}.{}", o + 1));
                fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
                paths[o] = path;
            }
            self.runs.push(paths);
        }
        wave.clear();
        Ok(())
    }
}

fn invert(shard: &[(u32, Vec<String>)]) -> [Inversion; 3] {
    let mut out: [Inversion; 3] = Default::default();
    for (ord, tokens) in shard {
        for order in ORDERS {
            for (term, tf) in text::ngram_keys(tokens, order) {
                out[order - 1].entry(term).or_default().push((*ord, tf));
            }
        }
    }
    out
}

/// Run layout: per term `bytes term, varint n, (varint ordinal, varint tf)*`.
fn encode_run(inv: &Inversion) -> Vec<u8> {
    let mut buf = Vec::new();
    for (term, postings) in inv {
        format::write_bytes(&mut buf, term.as_bytes());
        format::write_varint(&mut buf, postings.len() as u64);
        for &(ord, tf) in postings {
            format::write_varint(&mut buf, u64::from(ord));
            format::write_varint(&mut buf, u64::from(tf));
        }
    }
    buf
}

/// A term and its `(ordinal, tf)` postings within one run.
type RunTerm = (String, Vec<(u32, u32)>);

struct RunReader {
    path: PathBuf,
    reader: BufReader<File>,
}

impl RunReader {
    fn varint(&mut self) -> Result<Option<u64>> {
        let mut value = 0u64;
        let mut shift = 0;
        let mut byte = [0u8; 1];
        loop {
            match self.reader.read(&mut byte) {
                Ok(0) if shift == 0 => return Ok(None),
                Ok(0) => return Err(Error::corrupt(&self.path, "truncated run")),
                Ok(_) => {}
                Err(e) => return Err(Error::io(&self.path, e)),
            }
            value |= u64::from(byte[0] & 0x7f) << shift;
            if byte[0] & 0x80 == 0 {
                return Ok(Some(value));
            }
            shift += 7;
            if shift > 63 {
                return Err(Error::corrupt(&self.path, "varint overflow"));
            }
        }
    }

    fn need(&mut self) -> Result<u64> {
        self.varint()?
            .ok_or_else(|| Error::corrupt(&self.path, "truncated run"))
    }

    fn next_term(&mut self) -> Result<Option<RunTerm>> {
        let Some(len) = self.varint()? else {
            return Ok(None);
        };
        let mut term = vec![0u8; len as usize];
        self.reader
            .read_exact(&mut term)
            .map_err(|e| Error::io(&self.path, e))?;
        let term = String::from_utf8(term).map_err(|_| Error::corrupt(&self.path, "bad utf-8"))?;
        let n = self.need()?;
        let mut postings = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let ord = self.need()? as u32;
            let tf = self.need()? as u32;
            postings.push((ord, tf));
        }
        Ok(Some((term, postings)))
    }
}

/// K-way merge of one order's runs into its dictionary and postings file.
/// Returns the number of terms kept.
fn merge_order(out_dir: &Path, runs: &[[PathBuf; 3]], order: usize, min_df: u32) -> Result<u64> {
    let mut readers = runs
        .iter()
        .map(|r| {
            let path = r[order - 1].clone();
            File::open(&path)
                .map(|f| RunReader {
                    reader: BufReader::new(f),
                    path: path.clone(),
                })
                .map_err(|e| Error::io(&path, e))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut heads: Vec<Option<Vec<(u32, u32)>>> = vec![None; readers.len()];
    let mut heap: BinaryHeap<Reverse<(String, usize)>> = BinaryHeap::new();
    for (i, r) in readers.iter_mut().enumerate() {
        if let Some((term, postings)) = r.next_term()? {
            heads[i] = Some(postings);
            heap.push(Reverse((term, i)));
        }
    }

    let postings_path = out_dir.join(postings_file(order));
    let mut postings_out = BufWriter::new(File::create(&postings_path).map_err(|e| Error::io(&postings_path, e))?);
    let header = {
        let mut h = format::header(format::POSTINGS_MAGIC, &[]);
        h.extend_from_slice(&(order as u32).to_le_bytes());
        h
    };
    postings_out
        .write_all(&header)
        .map_err(|e| Error::io(&postings_path, e))?;
    let mut offset = header.len() as u64;
    let mut dict = DictEncoder::default();
    let mut merged: Vec<(u32, u32)> = Vec::new();
    let mut encoded = Vec::new();

    while let Some(Reverse((term, first))) = heap.pop() {
        merged.clear();
        let mut sources = vec![first];
        while let Some(Reverse((t, _))) = heap.peek() {
            if *t != term {
                break;
            }
            let Reverse((_, i)) = heap.pop().expect("peeked");
            sources.push(i);
        }
        // Heap order already yields equal terms by ascending run index.
        for &i in &sources {
            merged.extend(heads[i].take().expect("head present"));
            if let Some((t, p)) = readers[i].next_term()? {
                heads[i] = Some(p);
                heap.push(Reverse((t, i)));
            }
        }
        if (merged.len() as u64) < u64::from(min_df) {
            continue;
        }
        encoded.clear();
        format::encode_postings(&merged, &mut encoded);
        postings_out
            .write_all(&encoded)
            .map_err(|e| Error::io(&postings_path, e))?;
        dict.push(
            &term,
            TermInfo {
                doc_freq: merged.len() as u32,
                offset,
                len: encoded.len() as u64,
            },
        );
        offset += encoded.len() as u64;
    }
    postings_out.flush().map_err(|e| Error::io(&postings_path, e))?;

    let dict_path = out_dir.join(dict_file(order));
    let mut body = format::header(format::DICT_MAGIC, &[]);
    body.extend_from_slice(&(order as u32).to_le_bytes());
    body.extend_from_slice(&dict.count().to_le_bytes());
    body.extend_from_slice(dict.body());
    fs::write(&dict_path, &body).map_err(|e| Error::io(&dict_path, e))?;
    Ok(dict.count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::NGramIndex;

    fn paras(texts: &[&str]) -> Vec<Result<Paragraph>> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Paragraph::from_text(format!("d{i}"), 0, "", t, &TokenizerConfig::default()))
            .collect()
    }

    fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.is_file())
            .map(|p| {
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    fs::read(&p).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    }

    #[test]
    fn shard_size_does_not_change_output() {
        let texts: Vec<String> = (0..50)
            .map(|i| format!("w{} w{} common w{} tail", i % 7, i % 3, i % 11))
            .collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        build_index(
            paras(&refs),
            a.path(),
            &IndexSettings {
                shard_size: 1,
                ..Default::default()
            },
        )
        .unwrap();
        build_index(
            paras(&refs),
            b.path(),
            &IndexSettings {
                shard_size: 64,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(read_all(a.path()), read_all(b.path()));
        assert!(!a.path().join(RUNS_DIR).exists());
    }

    #[test]
    fn duplicate_paragraph_is_fatal_and_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TokenizerConfig::default();
        let input = vec![
            Paragraph::from_text("d", 0, "", "x y", &cfg),
            Paragraph::from_text("d", 0, "", "z", &cfg),
        ];
        let err = build_index(input, dir.path(), &IndexSettings::default()).unwrap_err();
        assert!(matches!(err, Error::DuplicateParagraph { .. }));
        assert!(read_all(dir.path()).is_empty());
    }

    #[test]
    fn upstream_error_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        let mut input = paras(&["a b"]);
        input.push(Err(Error::invalid("boom")));
        assert!(build_index(input, dir.path(), &IndexSettings::default()).is_err());
        assert!(read_all(dir.path()).is_empty());
    }

    #[test]
    fn min_df_prunes_higher_orders_only() {
        let dir = tempfile::tempdir().unwrap();
        let settings = IndexSettings {
            min_df: [1, 2, 2],
            ..Default::default()
        };
        let meta = build_index(paras(&["a b c", "a b d"]), dir.path(), &settings).unwrap();
        assert_eq!(meta.min_df, [1, 2, 2]);
        let idx = NGramIndex::open(dir.path()).unwrap();
        assert_eq!(idx.terms(1).count(), 4);
        assert_eq!(idx.terms(2).collect::<Vec<_>>(), ["a b"]);
        assert_eq!(idx.term_count(3), 0);
        // Lengths are computed before pruning.
        assert_eq!(idx.doc_len(0, 3), 1);
    }
}
