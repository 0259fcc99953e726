//! Streaming readers for article dumps and loaders for QA corpora.
//!
//! Dumps are JSONL with one `{"id", "title", "text"}` article per line, as
//! emitted by common Wikipedia extractors; paragraphs are separated by
//! blank lines inside `text`. QA corpora are read from SQuAD v1 JSON,
//! WikiQA TSV, or the unified JSONL schema that every other corpus is
//! converted into.

use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{Candidate, CorpusTag, Paragraph, QAEntry, SourceRef};
use crate::error::{Error, Result};
use crate::text::{self, TokenizerConfig};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpStats {
    pub articles: u64,
    pub paragraphs: u64,
    pub sentences: u64,
    pub tokens: u64,
    pub bytes_read: u64,
    pub malformed_lines: u64,
}

#[derive(Deserialize)]
struct Article {
    id: ArticleId,
    #[serde(default)]
    title: String,
    text: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ArticleId {
    Str(String),
    Num(u64),
}

impl ArticleId {
    fn into_string(self) -> String {
        match self {
            ArticleId::Str(s) => s,
            ArticleId::Num(n) => n.to_string(),
        }
    }
}

/// Lazily parsed paragraphs of a dump file.
///
/// Memory use is bounded by the longest line. In strict mode the first
/// malformed line ends the stream with an error; otherwise it is counted
/// in [`DumpStats::malformed_lines`] and skipped.
pub struct ParagraphStream {
    path: PathBuf,
    reader: BufReader<File>,
    cfg: TokenizerConfig,
    strict: bool,
    line: String,
    line_no: usize,
    pending: VecDeque<Paragraph>,
    stats: DumpStats,
    done: bool,
}

impl ParagraphStream {
    pub fn stats(&self) -> DumpStats {
        self.stats
    }

    pub fn tokenizer(&self) -> &TokenizerConfig {
        &self.cfg
    }

    fn read_article(&mut self) -> Option<Result<()>> {
        loop {
            self.line.clear();
            let n = match self.reader.read_line(&mut self.line) {
                Ok(n) => n,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            if n == 0 {
                return None;
            }
            self.line_no += 1;
            self.stats.bytes_read += n as u64;
            let raw = self.line.trim();
            if raw.is_empty() {
                continue;
            }
            let article: Article = match serde_json::from_str(raw) {
                Ok(a) => a,
                Err(e) => {
                    if self.strict {
                        return Some(Err(Error::parse(&self.path, self.line_no, e.to_string())));
                    }
                    warn!("{}:{}: skipping malformed line: {e}", self.path.display(), self.line_no);
                    self.stats.malformed_lines += 1;
                    continue;
                }
            };
            self.stats.articles += 1;
            let doc_id = article.id.into_string();
            for (i, block) in paragraph_blocks(&article.text).into_iter().enumerate() {
                let para = match Paragraph::from_text(doc_id.clone(), i as u32, article.title.clone(), block, &self.cfg)
                {
                    Ok(p) => p,
                    Err(e) => return Some(Err(e)),
                };
                self.stats.paragraphs += 1;
                self.stats.sentences += para.sentences.len() as u64;
                self.stats.tokens += para.tokens().count() as u64;
                self.pending.push_back(para);
            }
            return Some(Ok(()));
        }
    }
}

impl Iterator for ParagraphStream {
    type Item = Result<Paragraph>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(p) = self.pending.pop_front() {
                return Some(Ok(p));
            }
            if self.done {
                return None;
            }
            match self.read_article() {
                None => {
                    self.done = true;
                    return None;
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                Some(Ok(())) => {}
            }
        }
    }
}

/// Non-blank blocks of `text` separated by blank (whitespace-only) lines.
pub fn paragraph_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut start: Option<usize> = None;
    let mut end = 0;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        if line.trim().is_empty() {
            if let Some(s) = start.take() {
                blocks.push(text[s..end].trim());
            }
        } else {
            start.get_or_insert(line_start);
            end = offset;
        }
    }
    if let Some(s) = start {
        blocks.push(text[s..end].trim());
    }
    blocks
}

pub fn stream_paragraphs(path: impl AsRef<Path>, cfg: &TokenizerConfig, strict: bool) -> Result<ParagraphStream> {
    let path = path.as_ref().to_path_buf();
    let file = open(&path)?;
    Ok(ParagraphStream {
        path,
        reader: BufReader::new(file),
        cfg: *cfg,
        strict,
        line: String::new(),
        line_no: 0,
        pending: VecDeque::new(),
        stats: DumpStats::default(),
        done: false,
    })
}

/// Entries plus the ids of questions that loaded with a warning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedCorpus {
    pub entries: Vec<QAEntry>,
    pub flagged: Vec<String>,
    pub skipped_rows: usize,
}

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    #[serde(default)]
    answers: Vec<SquadAnswer>,
}

#[derive(Deserialize)]
struct SquadAnswer {
    answer_start: i64,
}

/// Loads SQuAD v1 JSON. Candidates are the sentences of the enclosing
/// paragraph; a sentence is gold when its span contains an annotated
/// answer start (a character offset).
pub fn load_squad(path: impl AsRef<Path>, cfg: &TokenizerConfig) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let file: SquadFile = serde_json::from_reader(BufReader::new(open(path)?))
        .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;

    let mut out = LoadedCorpus::default();
    let mut seen: HashMap<String, ()> = HashMap::new();
    for article in &file.data {
        for para in &article.paragraphs {
            let spans = text::sentence_spans(&para.context);
            for qa in &para.qas {
                if seen.insert(qa.id.clone(), ()).is_some() {
                    warn!("{}: duplicate question id {}, keeping the first", path.display(), qa.id);
                    out.flagged.push(qa.id.clone());
                    out.skipped_rows += 1;
                    continue;
                }
                let mut gold = vec![false; spans.len()];
                let mut flagged = spans.is_empty();
                for ans in &qa.answers {
                    match resolve_answer_sentence(&para.context, &spans, ans.answer_start) {
                        Some((idx, exact)) => {
                            gold[idx] = true;
                            flagged |= !exact;
                        }
                        None => flagged = true,
                    }
                }
                if flagged {
                    warn!(
                        "{}: question {} has an answer offset outside its sentences",
                        path.display(),
                        qa.id
                    );
                    out.flagged.push(qa.id.clone());
                }
                let candidates = spans
                    .iter()
                    .zip(&gold)
                    .map(|(r, &g)| Candidate::new(&para.context[r.clone()], g, cfg))
                    .collect();
                out.entries.push(QAEntry::new(
                    qa.id.clone(),
                    &qa.question,
                    CorpusTag::SQuAD,
                    candidates,
                    cfg,
                ));
            }
        }
    }
    Ok(out)
}

/// Index of the sentence covering character offset `start`, and whether
/// the offset fell inside a sentence. Offsets in inter-sentence
/// whitespace go to the following sentence; offsets outside the context
/// go to the nearest end.
fn resolve_answer_sentence(context: &str, spans: &[std::ops::Range<usize>], start: i64) -> Option<(usize, bool)> {
    if spans.is_empty() {
        return None;
    }
    if start < 0 {
        return Some((0, false));
    }
    let byte = match context.char_indices().nth(start as usize) {
        Some((b, _)) => b,
        None => return Some((spans.len() - 1, false)),
    };
    if let Some(i) = spans.iter().position(|r| r.contains(&byte)) {
        return Some((i, true));
    }
    let next = spans.iter().position(|r| r.start > byte).unwrap_or(spans.len() - 1);
    Some((next, false))
}

/// Loads a WikiQA TSV file.
///
/// Accepts the four-column `QuestionID, Question, Sentence, Label` layout
/// and the seven-column layout of the official release; a header row is
/// detected and used to locate columns by name. Rows are grouped by
/// question id in order of first appearance.
pub fn load_wikiqa(path: impl AsRef<Path>, cfg: &TokenizerConfig, strict: bool) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    let mut out = LoadedCorpus::default();
    let mut columns: Option<[usize; 4]> = None;
    let mut by_id: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<(String, String, Vec<Candidate>)> = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let cols = match columns {
            Some(c) => c,
            None => {
                if fields[0].trim().eq_ignore_ascii_case("QuestionID") {
                    columns = Some(header_columns(path, line_no, &fields)?);
                    continue;
                }
                let c = match fields.len() {
                    4 => [0, 1, 2, 3],
                    7 => [0, 1, 5, 6],
                    n => {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("expected 4 or 7 tab-separated columns, found {n}"),
                        ))
                    }
                };
                columns = Some(c);
                c
            }
        };
        let max_col = cols.iter().copied().max().unwrap_or(0);
        if fields.len() <= max_col {
            if strict {
                return Err(Error::parse(path, line_no, "missing columns"));
            }
            out.skipped_rows += 1;
            continue;
        }
        let [qid_col, q_col, s_col, l_col] = cols;
        let label: i64 = match fields[l_col].trim().parse() {
            Ok(l) => l,
            Err(_) => {
                if strict {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("label {:?} is not an integer", fields[l_col]),
                    ));
                }
                warn!("{}:{line_no}: skipping row with non-integer label", path.display());
                out.skipped_rows += 1;
                continue;
            }
        };
        let qid = fields[qid_col].trim().to_string();
        let cand = Candidate::new(fields[s_col], label > 0, cfg);
        match by_id.get(&qid) {
            Some(&g) => groups[g].2.push(cand),
            None => {
                by_id.insert(qid.clone(), groups.len());
                groups.push((qid, fields[q_col].to_string(), vec![cand]));
            }
        }
    }

    out.entries = groups
        .into_iter()
        .map(|(qid, question, cands)| QAEntry::new(qid, &question, CorpusTag::WikiQA, cands, cfg))
        .collect();
    Ok(out)
}

fn header_columns(path: &Path, line_no: usize, fields: &[&str]) -> Result<[usize; 4]> {
    let find = |name: &str| {
        fields
            .iter()
            .position(|f| f.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::parse(path, line_no, format!("header lacks column {name}")))
    };
    Ok([
        find("QuestionID")?,
        find("Question")?,
        find("Sentence")?,
        find("Label")?,
    ])
}

/// Questions with at least one gold candidate: the answer-selection split.
pub fn answer_selection_subset(entries: &[QAEntry]) -> Vec<QAEntry> {
    entries.iter().filter(|e| e.has_gold()).cloned().collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnifiedEntry {
    question_id: String,
    question: String,
    corpus: String,
    candidates: Vec<UnifiedCandidate>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnifiedCandidate {
    text: String,
    gold: bool,
    source: Option<UnifiedSource>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnifiedSource {
    doc_id: String,
    para: u32,
    sent: u32,
}

/// One line of the unified QA JSONL schema (no trailing newline).
pub fn to_unified_line(entry: &QAEntry) -> String {
    let wire = UnifiedEntry {
        question_id: entry.question_id.clone(),
        question: entry.question_text.clone(),
        corpus: entry.corpus_tag.as_str().to_string(),
        candidates: entry
            .candidates
            .iter()
            .map(|c| UnifiedCandidate {
                text: c.text.clone(),
                gold: c.is_gold,
                source: c.source_ref.as_ref().map(|s| UnifiedSource {
                    doc_id: s.doc_id.clone(),
                    para: s.para_index,
                    sent: s.sent_index,
                }),
            })
            .collect(),
    };
    serde_json::to_string(&wire).expect("unified entry serializes")
}

/// Parses one unified-schema line, tokenizing with `cfg`.
pub fn parse_unified_line(line: &str, cfg: &TokenizerConfig) -> std::result::Result<QAEntry, String> {
    let wire: UnifiedEntry = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let tag = CorpusTag::parse(&wire.corpus).ok_or_else(|| format!("unknown corpus tag {:?}", wire.corpus))?;
    let candidates = wire
        .candidates
        .into_iter()
        .map(|c| {
            let cand = Candidate::new(&c.text, c.gold, cfg);
            match c.source {
                Some(s) => cand.with_source(SourceRef {
                    doc_id: s.doc_id,
                    para_index: s.para,
                    sent_index: s.sent,
                }),
                None => cand,
            }
        })
        .collect();
    Ok(QAEntry::new(wire.question_id, &wire.question, tag, candidates, cfg))
}

/// True for the `{"provenance": ...}` header line written by the CLI.
pub fn is_provenance_line(line: &str) -> bool {
    let trimmed = line.trim_start();
    trimmed.starts_with("{\"provenance\":")
}

/// Loads unified JSONL. Any schema violation is fatal and names the line.
pub fn load_unified(path: impl AsRef<Path>, cfg: &TokenizerConfig) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    let mut out = LoadedCorpus::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || (i == 0 && is_provenance_line(&line)) {
            continue;
        }
        let entry = parse_unified_line(&line, cfg).map_err(|m| Error::parse(path, i + 1, m))?;
        out.entries.push(entry);
    }
    Ok(out)
}

pub fn write_unified(path: impl AsRef<Path>, header: Option<&str>, entries: &[QAEntry]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        if let Some(h) = header {
            writeln!(w, "{h}")?;
        }
        for e in entries {
            writeln!(w, "{}", to_unified_line(e))?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Unified,
    Squad,
    Wikiqa,
}

impl CorpusFormat {
    /// `.jsonl` is unified, `.json` is SQuAD, `.tsv`/`.txt` is WikiQA.
    pub fn detect(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" => Some(CorpusFormat::Unified),
            "json" => Some(CorpusFormat::Squad),
            "tsv" | "txt" => Some(CorpusFormat::Wikiqa),
            _ => None,
        }
    }
}

pub fn load_corpus(
    path: impl AsRef<Path>,
    format: Option<CorpusFormat>,
    cfg: &TokenizerConfig,
    strict: bool,
) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let format = format.or_else(|| CorpusFormat::detect(path)).ok_or_else(|| {
        Error::invalid(format!(
            "cannot infer corpus format of {}; pass it explicitly",
            path.display()
        ))
    })?;
    match format {
        CorpusFormat::Unified => load_unified(path, cfg),
        CorpusFormat::Squad => load_squad(path, cfg),
        CorpusFormat::Wikiqa => load_wikiqa(path, cfg, strict),
    }
}
