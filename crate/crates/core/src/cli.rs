//! The `qacorpus` command line: one subcommand per pipeline stage.
//!
//! Settings come from an optional TOML file (`--config`) and are overridden
//! by flags. Exit codes: 0 success, 1 internal or data error, 2 missing
//! input, 3 configuration or index mismatch.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{ArgAction, Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::{build_silver_dataset, load_silver, write_silver, CoverageStats};
use crate::analytics::{compute_stats, render_stats_table, type_distribution, QuestionLexicon};
use crate::corpus::{AlignmentConfig, QAEntry};
use crate::error::Error;
use crate::index::format::FORMAT_VERSION;
use crate::index::{build_index, Bm25Params, IndexSettings, NGramIndex, OrderWeights, META_FILE};
use crate::ingest::{load_corpus, stream_paragraphs, write_unified, CorpusFormat};
use crate::metrics::{
    gold_sets, load_run_file, mean_average_precision, mean_reciprocal_rank, run_from_lines, trigger_decisions,
    triggering_f1, RankingRun, TriggerScores,
};
use crate::retrieval::{accuracy_monotonicity_check, build_triggering_dataset, evaluate_retrieval};
use crate::text::TokenizerConfig;

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_INPUT_MISSING: u8 = 2;
pub const EXIT_CONFIG_MISMATCH: u8 = 3;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub dump: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub corpus_format: Option<CorpusFormat>,
    pub index_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Defaults to `silver.jsonl` in the output directory.
    pub silver: Option<PathBuf>,
    pub run: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    pub bm25: Bm25Params,
    pub min_df: [u32; 3],
    pub shard_size: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        let s = IndexSettings::default();
        Self {
            bm25: s.bm25,
            min_df: s.min_df,
            shard_size: s.shard_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathConfig,
    pub tokenizer: TokenizerConfig,
    pub alignment: AlignmentConfig,
    pub index: IndexConfig,
    pub order_weights: OrderWeights,
    /// Cutoffs of the retrieval accuracy table.
    pub ks: Vec<usize>,
    pub theta_sweep: Vec<f64>,
    /// Paragraphs retrieved per question for the triggering dataset.
    pub trigger_k: usize,
    pub trigger_threshold: f64,
    pub threshold_sweep: Vec<f64>,
    /// Unset: dumps lenient, QA corpora strict.
    pub strict: Option<bool>,
    pub lexicon: QuestionLexicon,
    /// 0 picks the number of cores.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: PathConfig::default(),
            tokenizer: TokenizerConfig::default(),
            alignment: AlignmentConfig::default(),
            index: IndexConfig::default(),
            order_weights: OrderWeights::default(),
            ks: vec![1, 5, 10, 20],
            theta_sweep: Vec::new(),
            trigger_k: 5,
            trigger_threshold: AlignmentConfig::DEFAULT_THETA,
            threshold_sweep: Vec::new(),
            strict: None,
            lexicon: QuestionLexicon::default(),
            threads: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())).into())
    }

    /// Every setting that can change an output. Paths, thread count and
    /// shard size are left out.
    pub fn effective(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("config serializes");
        let obj = value.as_object_mut().expect("config is an object");
        obj.remove("paths");
        obj.remove("threads");
        if let Some(index) = obj.get_mut("index").and_then(|v| v.as_object_mut()) {
            index.remove("shard_size");
        }
        value
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.effective().to_string().as_bytes())
    }

    fn strict_dump(&self) -> bool {
        self.strict.unwrap_or(false)
    }

    fn strict_corpus(&self) -> bool {
        self.strict.unwrap_or(true)
    }
}

/// A configuration problem; exits with [`EXIT_CONFIG_MISMATCH`].
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Parser)]
#[command(name = "qacorpus", version, about = "QA corpus alignment and retrieval evaluation")]
pub struct Cli {
    /// TOML pipeline configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the n-gram paragraph index from a JSONL article dump.
    Index(IndexArgs),
    /// Align gold answer sentences to indexed paragraphs (silver standard).
    Align(AlignArgs),
    /// Accuracy@k of question retrieval against the silver standard.
    Retrieve(RetrieveArgs),
    /// Build the answer-triggering dataset from top-k retrieval.
    Trigger(TriggerArgs),
    /// Corpus statistics and question-type distribution.
    Stats(StatsArgs),
    /// MAP, MRR and triggering F1 of a run file or the overlap baseline.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub no_lowercase: bool,
    #[arg(long)]
    pub keep_punct: bool,
    #[arg(long)]
    pub no_nfc: bool,
    /// Fail on the first malformed input line.
    #[arg(long, conflicts_with = "lenient")]
    pub strict: bool,
    /// Skip malformed input lines.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Corpus format; inferred from the extension when absent.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
}

#[derive(Debug, Clone, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[arg(long)]
    pub index_dir: Option<PathBuf>,
    #[arg(long)]
    pub shard_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub min_df: Option<Vec<u32>>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AlignArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub index_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long)]
    pub top_m: Option<usize>,
    /// Extra thresholds reported as coverage rows, e.g. 0.3,0.4,0.5.
    #[arg(long, value_delimiter = ',')]
    pub theta_sweep: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub order_weights: Option<Vec<f64>>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub silver: Option<PathBuf>,
    #[arg(long)]
    pub index_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub order_weights: Option<Vec<f64>>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TriggerArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub silver: Option<PathBuf>,
    #[arg(long)]
    pub index_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub order_weights: Option<Vec<f64>>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Repeat to pool several files, e.g. the splits of one corpus.
    #[arg(long)]
    pub corpus: Vec<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Column name in the text table.
    #[arg(long, default_value = "corpus")]
    pub label: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// JSONL run file; the overlap baseline is scored when absent.
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub threshold_sweep: Option<Vec<f64>>,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn parse_format(s: &str) -> Result<CorpusFormat, String> {
    match s.to_ascii_lowercase().as_str() {
        "unified" => Ok(CorpusFormat::Unified),
        "squad" => Ok(CorpusFormat::Squad),
        "wikiqa" => Ok(CorpusFormat::Wikiqa),
        other => Err(format!("unknown corpus format {other:?} (unified, squad, wikiqa)")),
    }
}

fn triple<T: Copy>(v: &[T], name: &str) -> anyhow::Result<[T; 3]> {
    <[T; 3]>::try_from(v).map_err(|_| ConfigError(format!("--{name} takes three values")).into())
}

fn config_err(e: Error) -> anyhow::Error {
    ConfigError(e.to_string()).into()
}

impl CommonArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if self.no_lowercase {
            cfg.tokenizer.lowercase = false;
        }
        if self.keep_punct {
            cfg.tokenizer.strip_punct = false;
        }
        if self.no_nfc {
            cfg.tokenizer.unicode_nfc = false;
        }
        if self.strict {
            cfg.strict = Some(true);
        }
        if self.lenient {
            cfg.strict = Some(false);
        }
    }
}

impl CorpusArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        set(&mut cfg.paths.corpus, &self.corpus);
        if self.format.is_some() {
            cfg.paths.corpus_format = self.format;
        }
    }
}

fn set(slot: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

fn apply_weights(cfg: &mut PipelineConfig, w: &Option<Vec<f64>>) -> anyhow::Result<()> {
    if let Some(w) = w {
        cfg.order_weights = OrderWeights::new(triple(w, "order-weights")?).map_err(config_err)?;
    }
    Ok(())
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Index(_) => "index",
            Command::Align(_) => "align",
            Command::Retrieve(_) => "retrieve",
            Command::Trigger(_) => "trigger",
            Command::Stats(_) => "stats",
            Command::Eval(_) => "eval",
        }
    }

    /// Folds this command's flags into `cfg`.
    pub fn apply(&self, cfg: &mut PipelineConfig) -> anyhow::Result<()> {
        match self {
            Command::Index(a) => {
                set(&mut cfg.paths.dump, &a.dump);
                set(&mut cfg.paths.index_dir, &a.index_dir);
                if let Some(s) = a.shard_size {
                    cfg.index.shard_size = s;
                }
                if let Some(m) = &a.min_df {
                    cfg.index.min_df = triple(m, "min-df")?;
                }
                a.common.apply(cfg);
            }
            Command::Align(a) => {
                a.corpus.apply(cfg);
                set(&mut cfg.paths.index_dir, &a.index_dir);
                set(&mut cfg.paths.out_dir, &a.out_dir);
                let lambdas = match &a.lambdas {
                    Some(l) => triple(l, "lambdas")?,
                    None => cfg.alignment.lambdas(),
                };
                cfg.alignment = AlignmentConfig::new(
                    lambdas,
                    a.theta.unwrap_or(cfg.alignment.theta()),
                    a.top_m.unwrap_or(cfg.alignment.top_m()),
                )
                .map_err(config_err)?;
                if let Some(s) = &a.theta_sweep {
                    cfg.theta_sweep.clone_from(s);
                }
                apply_weights(cfg, &a.order_weights)?;
                a.common.apply(cfg);
            }
            Command::Retrieve(a) => {
                a.corpus.apply(cfg);
                set(&mut cfg.paths.silver, &a.silver);
                set(&mut cfg.paths.index_dir, &a.index_dir);
                set(&mut cfg.paths.out_dir, &a.out_dir);
                if let Some(ks) = &a.ks {
                    cfg.ks.clone_from(ks);
                }
                apply_weights(cfg, &a.order_weights)?;
                a.common.apply(cfg);
            }
            Command::Trigger(a) => {
                a.corpus.apply(cfg);
                set(&mut cfg.paths.silver, &a.silver);
                set(&mut cfg.paths.index_dir, &a.index_dir);
                set(&mut cfg.paths.out_dir, &a.out_dir);
                if let Some(k) = a.k {
                    cfg.trigger_k = k;
                }
                apply_weights(cfg, &a.order_weights)?;
                a.common.apply(cfg);
            }
            Command::Stats(a) => {
                CorpusArgs {
                    corpus: a.corpus.first().cloned(),
                    format: a.format,
                }
                .apply(cfg);
                set(&mut cfg.paths.out_dir, &a.out_dir);
                a.common.apply(cfg);
            }
            Command::Eval(a) => {
                a.corpus.apply(cfg);
                set(&mut cfg.paths.run, &a.run);
                set(&mut cfg.paths.out_dir, &a.out_dir);
                if let Some(t) = a.threshold {
                    cfg.trigger_threshold = t;
                }
                if let Some(s) = &a.threshold_sweep {
                    cfg.threshold_sweep.clone_from(s);
                }
                a.common.apply(cfg);
            }
        }
        Ok(())
    }
}

/// Header written at the top of every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub format_version: u32,
    pub command: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    /// Input role to sha256 of its content.
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    fn new(command: &str, cfg: &PipelineConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            format_version: FORMAT_VERSION,
            command: command.to_string(),
            config_sha256: cfg.digest(),
            config: cfg.effective(),
            inputs: BTreeMap::new(),
        }
    }

    fn input(&mut self, role: &str, path: &Path) -> anyhow::Result<()> {
        self.inputs.insert(role.to_string(), file_digest(path)?);
        Ok(())
    }

    /// The JSONL header line.
    pub fn line(&self) -> String {
        serde_json::to_string(&serde_json::json!({ "provenance": self })).expect("serializes")
    }

    fn comment(&self) -> String {
        format!("# {}\n", self.line())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> anyhow::Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: T,
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, prov: &Provenance, body: T) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(&Report { provenance: prov, body })?;
    s.push('\n');
    write_file(path, &s)
}

fn require<'a>(slot: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a Path> {
    slot.as_deref()
        .ok_or_else(|| Error::NotFound(format!("no {flag} given (flag or config)")).into())
}

fn out_dir(cfg: &PipelineConfig) -> anyhow::Result<PathBuf> {
    let dir = require(&cfg.paths.out_dir, "--out-dir")?.to_path_buf();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn load_qa(cfg: &PipelineConfig, prov: &mut Provenance) -> anyhow::Result<Vec<QAEntry>> {
    let path = require(&cfg.paths.corpus, "--corpus")?;
    prov.input("corpus", path)?;
    let loaded = load_corpus(path, cfg.paths.corpus_format, &cfg.tokenizer, cfg.strict_corpus())?;
    if !loaded.flagged.is_empty() || loaded.skipped_rows > 0 {
        log::warn!(
            "{}: {} questions flagged, {} rows skipped",
            path.display(),
            loaded.flagged.len(),
            loaded.skipped_rows
        );
    }
    info!("loaded {} questions from {}", loaded.entries.len(), path.display());
    Ok(loaded.entries)
}

fn open_index(cfg: &PipelineConfig, prov: &mut Provenance) -> anyhow::Result<NGramIndex> {
    let dir = require(&cfg.paths.index_dir, "--index-dir")?;
    prov.input("index", &dir.join(META_FILE))?;
    Ok(NGramIndex::open_with(dir, &cfg.tokenizer)?)
}

fn silver_path(cfg: &PipelineConfig) -> anyhow::Result<PathBuf> {
    match &cfg.paths.silver {
        Some(p) => Ok(p.clone()),
        None => Ok(require(&cfg.paths.out_dir, "--silver or --out-dir")?.join("silver.jsonl")),
    }
}

fn cmd_index(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let dump = require(&cfg.paths.dump, "--dump")?;
    let dir = require(&cfg.paths.index_dir, "--index-dir")?;
    let mut prov = Provenance::new("index", cfg);
    prov.input("dump", dump)?;
    let settings = IndexSettings {
        tokenizer: cfg.tokenizer,
        bm25: cfg.index.bm25,
        min_df: cfg.index.min_df,
        shard_size: cfg.index.shard_size,
        provenance: Some(serde_json::to_value(&prov)?),
    };
    let mut stream = stream_paragraphs(dump, &cfg.tokenizer, cfg.strict_dump())?;
    let meta = build_index(stream.by_ref(), dir, &settings)?;
    let dump_stats = stream.stats();
    info!(
        "indexed {} paragraphs from {} articles",
        meta.paragraph_count, dump_stats.articles
    );
    let out = serde_json::json!({ "dump": dump_stats, "index": meta });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn coverage_table(rows: &[CoverageStats]) -> String {
    let mut s = format!(
        "{:>6}  {:>9}  {:>8}  {:>10}\n",
        "theta", "gamma_c", "gamma_p", "total_gold"
    );
    for r in rows {
        s.push_str(&format!(
            "{:>6.2}  {:>9}  {:>8.2}  {:>10}\n",
            r.theta, r.gamma_c, r.gamma_p, r.total_gold
        ));
    }
    s
}

fn cmd_align(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let mut prov = Provenance::new("align", cfg);
    let corpus = load_qa(cfg, &mut prov)?;
    let index = open_index(cfg, &mut prov)?;
    let out = out_dir(cfg)?;
    let silver = build_silver_dataset(&corpus, &index, &cfg.alignment, cfg.order_weights, &cfg.theta_sweep)?;
    write_silver(out.join("silver.jsonl"), Some(&prov.line()), &silver.records)?;
    write_json(
        &out.join("align_stats.json"),
        &prov,
        serde_json::json!({ "coverage": silver.stats, "sweep": silver.sweep }),
    )?;
    let mut text = coverage_table(&[silver.stats]);
    if !silver.sweep.is_empty() {
        text.push_str("\nsweep\n");
        text.push_str(&coverage_table(&silver.sweep));
    }
    write_file(&out.join("align_stats.txt"), &(prov.comment() + &text))?;
    print!("{text}");
    Ok(())
}

fn cmd_retrieve(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let mut prov = Provenance::new("retrieve", cfg);
    let corpus = load_qa(cfg, &mut prov)?;
    let silver_file = silver_path(cfg)?;
    prov.input("silver", &silver_file)?;
    let silver = load_silver(&silver_file)?;
    let index = open_index(cfg, &mut prov)?;
    let out = out_dir(cfg)?;
    let report = evaluate_retrieval(&corpus, &silver, &index, &cfg.ks, cfg.order_weights)?;
    let monotone = accuracy_monotonicity_check(&report.table);
    write_json(
        &out.join("retrieval.json"),
        &prov,
        serde_json::json!({
            "table": report.table,
            "monotone": monotone,
            "results": report.results,
        }),
    )?;
    let text = report.table.render();
    write_file(&out.join("retrieval.txt"), &(prov.comment() + &text))?;
    print!("{text}");
    Ok(())
}

fn cmd_trigger(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let mut prov = Provenance::new("trigger", cfg);
    let corpus = load_qa(cfg, &mut prov)?;
    let silver_file = silver_path(cfg)?;
    prov.input("silver", &silver_file)?;
    let silver = load_silver(&silver_file)?;
    let index = open_index(cfg, &mut prov)?;
    let out = out_dir(cfg)?;
    let data = build_triggering_dataset(&corpus, &silver, &index, cfg.trigger_k, cfg.order_weights)?;
    write_unified(out.join("trigger.jsonl"), Some(&prov.line()), &data.entries)?;
    write_json(&out.join("trigger_stats.json"), &prov, data.stats)?;
    let s = &data.stats;
    let text = format!(
        "k {}: {} questions, {} candidates, {} without a gold sentence ({:.2}%)\n",
        s.k, s.questions, s.candidates, s.gold_less, s.gold_less_pct
    );
    write_file(&out.join("trigger_stats.txt"), &(prov.comment() + &text))?;
    print!("{text}");
    Ok(())
}

fn cmd_stats(cfg: &PipelineConfig, files: &[PathBuf], label: &str) -> anyhow::Result<()> {
    let mut prov = Provenance::new("stats", cfg);
    let mut corpus = load_qa(cfg, &mut prov)?;
    for (i, path) in files.iter().enumerate().skip(1) {
        let mut one = cfg.clone();
        one.paths.corpus = Some(path.clone());
        let mut p = Provenance::new("stats", &one);
        corpus.extend(load_qa(&one, &mut p)?);
        prov.inputs
            .insert(format!("corpus.{i}"), p.inputs.remove("corpus").expect("recorded"));
    }
    let out = out_dir(cfg)?;
    let stats = compute_stats(&corpus)?;
    let types = type_distribution(&corpus, &cfg.lexicon)?;
    write_json(
        &out.join("stats.json"),
        &prov,
        serde_json::json!({ "stats": stats, "question_types": types }),
    )?;
    let text = render_stats_table(&[(label, &stats)]);
    write_file(&out.join("stats.txt"), &(prov.comment() + &text))?;
    write_file(&out.join("question_types.csv"), &(prov.comment() + &types.to_csv()))?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct ThresholdRow {
    threshold: f64,
    #[serde(flatten)]
    scores: TriggerScores,
}

fn cmd_eval(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let mut prov = Provenance::new("eval", cfg);
    let corpus = load_qa(cfg, &mut prov)?;
    let out = out_dir(cfg)?;
    let run = match &cfg.paths.run {
        Some(path) => {
            prov.input("run", path)?;
            let label = path
                .file_stem()
                .map_or("run".into(), |s| s.to_string_lossy().into_owned());
            run_from_lines(label, &corpus, &load_run_file(path)?)?
        }
        None => RankingRun::baseline(&corpus),
    };
    // Undefined when no question has a relevant candidate.
    let map = mean_average_precision(&run).ok();
    let mrr = mean_reciprocal_rank(&run).ok();
    let gold = gold_sets(&corpus);
    let score_at = |threshold: f64| -> anyhow::Result<ThresholdRow> {
        Ok(ThresholdRow {
            threshold,
            scores: triggering_f1(&trigger_decisions(&run, threshold), &gold)?,
        })
    };
    let main = score_at(cfg.trigger_threshold)?;
    let sweep = cfg
        .threshold_sweep
        .iter()
        .map(|&t| score_at(t))
        .collect::<anyhow::Result<Vec<_>>>()?;
    write_json(
        &out.join("eval.json"),
        &prov,
        serde_json::json!({
            "label": run.label,
            "questions": run.questions.len(),
            "excluded": run.excluded(),
            "map": map,
            "mrr": mrr,
            "triggering": main,
            "sweep": sweep,
        }),
    )?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    let mut text = format!(
        "{}: MAP {} MRR {} ({} of {} questions without a relevant candidate excluded)\n",
        run.label,
        fmt(map),
        fmt(mrr),
        run.excluded(),
        run.questions.len()
    );
    text.push_str(&format!(
        "{:>9}  {:>9}  {:>6}  {:>6}\n",
        "threshold", "precision", "recall", "f1"
    ));
    for row in std::iter::once(&main).chain(&sweep) {
        text.push_str(&format!(
            "{:>9.2}  {:>9.4}  {:>6.4}  {:>6.4}\n",
            row.threshold, row.scores.precision, row.scores.recall, row.scores.f1
        ));
    }
    write_file(&out.join("eval.txt"), &(prov.comment() + &text))?;
    print!("{text}");
    Ok(())
}

/// Resolves the configuration and runs the command on a pool of the
/// configured size.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    cli.command.apply(&mut cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .context("starting worker threads")?;
    pool.install(|| match &cli.command {
        Command::Index(_) => cmd_index(&cfg),
        Command::Align(_) => cmd_align(&cfg),
        Command::Retrieve(_) => cmd_retrieve(&cfg),
        Command::Trigger(_) => cmd_trigger(&cfg),
        Command::Stats(a) => cmd_stats(&cfg, &a.corpus, &a.label),
        Command::Eval(_) => cmd_eval(&cfg),
    })
    .with_context(|| format!("{} failed", cli.command.name()))
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG_MISMATCH;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NotFound(_) => EXIT_INPUT_MISSING,
                Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => EXIT_INPUT_MISSING,
                Error::TokenizerMismatch { .. } | Error::FormatVersion { .. } => EXIT_CONFIG_MISMATCH,
                _ => EXIT_INTERNAL,
            };
        }
    }
    EXIT_INTERNAL
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
