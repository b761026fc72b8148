//! Command-line surface.
//!
//! Training commands share a run directory holding the fixed file names
//! below. `train-level1` starts a fresh metrics log whose first record echoes
//! the resolved configuration; later commands append to it. Configuration
//! resolves as built-in defaults, then a TOML file, then flags.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::baseline::{lex_rule_classify, RuleThresholds};
use crate::corpus::synthetic::{clause_corpus, contrast_corpus, SyntheticConfig};
use crate::corpus::{
    aggregate_labels, load_dataset, ClauseSplitter, CorpusRecord, Dataset, Split, SplitConfig, TokenMode, View,
};
use crate::error::{Error, Result};
use crate::lexicon::Lexicons;
use crate::network::{
    distill_clauses, distilled_from_jsonl, distilled_to_jsonl, evaluate, evaluate_level1, evaluate_level2,
    level1_checkpoint, level1_examples, level1_from_checkpoint, level2_checkpoint, predict, train_level1,
    train_level2, Bundle, EpochStats, Level1Model, Level2Model, Pooling, TrainConfig,
};
use crate::numerics::{Algorithm, Checkpoint};
use crate::verify::{run_suite, SuiteConfig};

pub const INPUTS_FILE: &str = "inputs.json";
pub const LEVEL1_FILE: &str = "level1.json";
pub const DISTILLED_FILE: &str = "distilled.jsonl";
pub const LEVEL2_FILE: &str = "level2.json";
pub const BUNDLE_FILE: &str = "bundle.json";
pub const METRICS_FILE: &str = "metrics.jsonl";

/// Embedding sizes and duplication factors searched by `--grid`.
pub const GRID_EMBED: [usize; 5] = [100, 150, 200, 250, 300];
pub const GRID_N: [usize; 8] = [1, 3, 5, 7, 9, 11, 13, 15];

#[derive(Debug, Parser)]
#[command(name = "lexlstm", version, about = "Lexicon-augmented two-level bi-LSTM sentiment classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assign train/test splits and write the corpus back out.
    Split(SplitArgs),
    /// Aggregate annotator scores into labels.
    Aggregate(AggregateArgs),
    /// Per-class sample counts for raw sentences and clauses.
    Stats(CorpusArgs),
    /// Score texts with the lexicon-rule baseline.
    Lexrule(LexruleArgs),
    /// Entry counts per dictionary category.
    DictStats(DictArgs),
    /// Generate a synthetic corpus and its dictionary.
    Synth(SynthArgs),
    /// Train the clause-level network (or search a hyperparameter grid).
    TrainLevel1(TrainLevel1Args),
    /// Run the trained clause-level network over every sentence.
    Distill(DistillArgs),
    /// Train the sentence-level network on distilled clause features.
    TrainLevel2(TrainLevel2Args),
    /// Accuracy and confusion counts of a trained model.
    Eval(EvalArgs),
    /// Classify texts with a trained model.
    Predict(PredictArgs),
    /// Finite-difference check of every backward pass.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SplitFlags {
    /// Seed for the train/test assignment.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
}

impl SplitFlags {
    fn config(&self) -> SplitConfig {
        SplitConfig {
            seed: self.seed,
            test_fraction: self.test_fraction,
        }
    }
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub corpus: PathBuf,
    #[command(flatten)]
    pub split: SplitFlags,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Corpus whose sentence records carry annotator scores.
    pub corpus: Option<PathBuf>,
    /// Comma-separated scores to aggregate directly, e.g. `1,1,0.5`.
    #[arg(long, value_delimiter = ',')]
    pub scores: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    pub corpus: PathBuf,
    #[command(flatten)]
    pub split: SplitFlags,
}

#[derive(Debug, Args)]
pub struct DictArgs {
    /// Dictionary file or directory; repeatable.
    #[arg(long = "dict", required = true)]
    pub dicts: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LexruleArgs {
    #[command(flatten)]
    pub dict: DictArgs,
    /// Corpus JSONL, or plain text with one sample per line.
    pub file: PathBuf,
    #[arg(long, default_value = "word")]
    pub mode: TokenMode,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub train: usize,
    #[arg(long, default_value_t = 100)]
    pub test: usize,
    #[arg(long, default_value_t = 0.6)]
    pub seen_fraction: f64,
    #[arg(long, default_value_t = 0.15)]
    pub negation_rate: f64,
    /// Write a single-level clause corpus with this many clauses per class
    /// instead of the two-clause sentence corpus.
    #[arg(long)]
    pub clauses_per_class: Option<usize>,
    /// Vocabulary size of the clause corpus.
    #[arg(long, default_value_t = 50)]
    pub vocab: usize,
}

/// Every training knob as an optional override.
#[derive(Debug, Default, Args)]
pub struct TrainFlags {
    /// TOML file with training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mode: Option<TokenMode>,
    /// Level-1 training view: R, C or R+C.
    #[arg(long)]
    pub view: Option<View>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub hidden1: Option<usize>,
    #[arg(long)]
    pub hidden2: Option<usize>,
    #[arg(long)]
    pub pooling: Option<Pooling>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub tanh_candidate: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub previous_candidate_cell: Option<bool>,
    #[arg(long)]
    pub keyword_embedding: Option<bool>,
    #[arg(long)]
    pub polar_embedding: Option<bool>,
    #[arg(long)]
    pub pos_embedding: Option<bool>,
    #[arg(long)]
    pub conjunction_embedding: Option<bool>,
    #[arg(long)]
    pub conjunction_in_input: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub collapse_y: Option<bool>,
    #[arg(long, value_parser = parse_algorithm)]
    pub optimizer: Option<Algorithm>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs1: Option<usize>,
    #[arg(long)]
    pub epochs2: Option<usize>,
    #[arg(long)]
    pub stop_at_train_accuracy: Option<f64>,
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    match s {
        "sgd" => Ok(Algorithm::Sgd),
        "adam" => Ok(Algorithm::Adam),
        other => Err(format!("unknown optimizer '{other}' (sgd|adam)")),
    }
}

macro_rules! override_fields {
    ($flags:expr, $cfg:expr, [$($field:ident),* $(,)?]) => {
        $(if let Some(v) = $flags.$field.clone() { $cfg.$field = v; })*
    };
}

impl TrainFlags {
    /// Applies the config file, then the flags, on top of `base`.
    pub fn resolve(&self, base: TrainConfig) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = read_input(path, "config file")?;
                merge_toml(base, &text)?
            }
            None => base,
        };
        override_fields!(self, cfg, [
            seed, mode, view, test_fraction, embed_dim, n, rho, hidden1, hidden2, pooling,
            tanh_candidate, previous_candidate_cell, keyword_embedding, polar_embedding, pos_embedding,
            conjunction_embedding, conjunction_in_input, collapse_y, optimizer, lr, batch_size,
            epochs1, epochs2,
        ]);
        if self.stop_at_train_accuracy.is_some() {
            cfg.stop_at_train_accuracy = self.stop_at_train_accuracy;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Overlays the keys present in a TOML document onto `base`.
fn merge_toml(base: TrainConfig, text: &str) -> Result<TrainConfig> {
    let overlay: toml::Table = toml::from_str(text).map_err(|e| Error::config(format!("config file: {e}")))?;
    let mut merged = match serde_json::to_value(&base)? {
        serde_json::Value::Object(m) => m,
        _ => unreachable!("config serializes to an object"),
    };
    for (k, v) in overlay {
        if !merged.contains_key(&k) {
            return Err(Error::config(format!("config file: unknown key '{k}'")));
        }
        merged.insert(k, serde_json::to_value(v)?);
    }
    serde_json::from_value(serde_json::Value::Object(merged)).map_err(|e| Error::config(format!("config file: {e}")))
}

#[derive(Debug, Args)]
pub struct RunDirArg {
    /// Directory holding this run's checkpoints and metrics.
    #[arg(long)]
    pub run_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainLevel1Args {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub dict: DictArgs,
    #[command(flatten)]
    pub run: RunDirArg,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Search embedding size × duplication factor instead of training once.
    #[arg(long)]
    pub grid: bool,
    /// Restrict the grid's embedding sizes.
    #[arg(long, value_delimiter = ',')]
    pub grid_embed: Option<Vec<usize>>,
    /// Restrict the grid's duplication factors.
    #[arg(long, value_delimiter = ',')]
    pub grid_n: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub run: RunDirArg,
    /// Corpus to distill (defaults to the one used for level 1).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainLevel2Args {
    #[command(flatten)]
    pub run: RunDirArg,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Bundle checkpoint (defaults to the run directory's).
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
    /// Evaluate the clause-level network alone on its training view.
    #[arg(long)]
    pub level1: bool,
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(format!("unknown split '{other}' (train|test)")),
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// File with one text per line.
    #[arg(long)]
    pub input: Option<PathBuf>,
    pub texts: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Number of seeds per op and shape.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Only ops whose name starts with this prefix.
    #[arg(long)]
    pub only: Option<String>,
    /// Perturb this op's analytic gradient (harness self-test).
    #[arg(long)]
    pub corrupt: Option<String>,
    #[arg(long, default_value_t = crate::verify::DEFAULT_EPS)]
    pub eps: f64,
}

/// Corpus and dictionaries a run was trained from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInputs {
    pub corpus: PathBuf,
    pub dicts: Vec<PathBuf>,
}

fn read_input(path: &Path, what: &str) -> Result<String> {
    if !path.exists() {
        return Err(Error::Usage(format!("{what} not found: {}", path.display())));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn require_artifact(dir: &Path, name: &str, produced_by: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if !p.exists() {
        return Err(Error::Usage(format!(
            "{} is missing; run `{produced_by}` first",
            p.display()
        )));
    }
    Ok(p)
}

fn load_lexicons(dicts: &[PathBuf]) -> Result<Lexicons> {
    for d in dicts {
        if !d.exists() {
            return Err(Error::Usage(format!("dictionary not found: {}", d.display())));
        }
    }
    Lexicons::load(dicts)
}

fn load_corpus(path: &Path, cfg: &SplitConfig) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::Usage(format!("corpus not found: {}", path.display())));
    }
    load_dataset(path, cfg)
}

fn split_config(cfg: &TrainConfig) -> SplitConfig {
    SplitConfig {
        seed: cfg.seed,
        test_fraction: cfg.test_fraction,
    }
}

/// Stable identifier of a configuration: a hash of its canonical JSON.
pub fn run_id(cfg: &TrainConfig) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(cfg)?);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Line-delimited metrics records for one run.
pub struct MetricsLog {
    path: PathBuf,
    run_id: String,
}

impl MetricsLog {
    fn create(dir: &Path, cfg: &TrainConfig) -> Result<Self> {
        let path = dir.join(METRICS_FILE);
        write_file(&path, "")?;
        Ok(Self { path, run_id: run_id(cfg)? })
    }

    fn open(dir: &Path, cfg: &TrainConfig) -> Result<Self> {
        Ok(Self {
            path: dir.join(METRICS_FILE),
            run_id: run_id(cfg)?,
        })
    }

    fn record(&self, mut value: serde_json::Value) -> Result<()> {
        let mut obj = serde_json::Map::new();
        obj.insert("run_id".into(), self.run_id.clone().into());
        if let serde_json::Value::Object(m) = &mut value {
            obj.append(m);
        }
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        writeln!(f, "{}", serde_json::Value::Object(obj)).map_err(|e| Error::io(&self.path, e))
    }

    fn epoch(&self, level: u8, split: &str, st: &EpochStats) -> Result<()> {
        self.record(json!({
            "level": level,
            "epoch": st.epoch,
            "split": split,
            "loss": st.loss,
            "accuracy": st.accuracy,
        }))
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::Usage(format!("checkpoint not found: {}", path.display())));
    }
    Checkpoint::load(path)
}

fn load_bundle(run_dir: Option<&Path>, bundle: Option<&Path>) -> Result<Bundle> {
    let path = match (bundle, run_dir) {
        (Some(b), _) => b.to_path_buf(),
        (None, Some(d)) => require_artifact(d, BUNDLE_FILE, "train-level2")?,
        (None, None) => return Err(Error::Usage("give --bundle or --run-dir".into())),
    };
    Bundle::from_json(&read_input(&path, "bundle")?)
}

fn read_inputs(dir: &Path) -> Result<RunInputs> {
    let p = require_artifact(dir, INPUTS_FILE, "train-level1")?;
    serde_json::from_str(&read_input(&p, "run inputs")?).map_err(Error::from)
}

fn jsonl_line(out: &mut dyn Write, v: &impl Serialize) -> Result<()> {
    let line = serde_json::to_string(v)?;
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

fn say(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn cmd_split(a: &SplitArgs, out: &mut dyn Write) -> Result<()> {
    let text = read_input(&a.corpus, "corpus")?;
    let ds = Dataset::parse_jsonl(&text, &a.split.config())?;
    let mut body = String::new();
    let mut samples = ds.samples.iter();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: CorpusRecord =
            serde_json::from_str(line).map_err(|e| Error::data_at(format!("malformed record: {e}"), i + 1))?;
        let sample = samples.next().expect("one sample per record");
        rec.split = Some(if sample.split == Split::Train { "train" } else { "test" }.into());
        body.push_str(&serde_json::to_string(&rec)?);
        body.push('\n');
    }
    match &a.out {
        Some(p) => {
            write_file(p, &body)?;
            let test = ds.samples.iter().filter(|s| s.split == Split::Test).count();
            say(out, format!("{} train, {test} test -> {}", ds.samples.len() - test, p.display()))
        }
        None => write!(out, "{body}").map_err(|e| Error::io("<stdout>", e)),
    }
}

fn cmd_aggregate(a: &AggregateArgs, out: &mut dyn Write) -> Result<()> {
    match (&a.scores, &a.corpus) {
        (Some(scores), None) => {
            let agg = aggregate_labels(scores)?;
            jsonl_line(out, &json!({"scores": scores, "mean": agg.mean, "label": agg.label}))
        }
        (None, Some(path)) => {
            let ds = load_corpus(path, &SplitConfig::default())?;
            for s in ds.sentences(None) {
                jsonl_line(out, &json!({"id": s.id, "mean": s.mean_score, "label": s.label}))?;
            }
            Ok(())
        }
        _ => Err(Error::Usage("give either a corpus file or --scores".into())),
    }
}

fn cmd_stats(a: &CorpusArgs, out: &mut dyn Write) -> Result<()> {
    let ds = load_corpus(&a.corpus, &a.split.config())?;
    say(out, ds.stats())
}

fn cmd_lexrule(a: &LexruleArgs, out: &mut dyn Write) -> Result<()> {
    let lex = load_lexicons(&a.dict.dicts)?;
    let text = read_input(&a.file, "input file")?;
    let th = RuleThresholds::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = if line.trim_start().starts_with('{') {
            let rec: CorpusRecord =
                serde_json::from_str(line).map_err(|e| Error::data_at(format!("malformed record: {e}"), i + 1))?;
            (rec.id.unwrap_or_else(|| format!("L{}", i + 1)), rec.text)
        } else {
            (format!("L{}", i + 1), line.to_string())
        };
        let r = lex_rule_classify(&body, &lex, a.mode, &th);
        jsonl_line(out, &json!({"id": id, "score": r.score, "class": r.label}))?;
    }
    Ok(())
}

fn cmd_dict_stats(a: &DictArgs, out: &mut dyn Write) -> Result<()> {
    say(out, load_lexicons(&a.dicts)?.stats())
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = match a.clauses_per_class {
        Some(k) => clause_corpus(a.seed, k, a.vocab, a.negation_rate)?,
        None => contrast_corpus(&SyntheticConfig {
            seed: a.seed,
            train_sentences: a.train,
            test_sentences: a.test,
            seen_fraction: a.seen_fraction,
            negation_rate: a.negation_rate,
            ..Default::default()
        })?,
    };
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let cp = a.out_dir.join("corpus.jsonl");
    let lp = a.out_dir.join("lexicon.tsv");
    corpus.write(&cp, &lp)?;
    say(
        out,
        format!("{} records, vocabulary {} -> {}, {}", corpus.records.len(), corpus.vocab_size, cp.display(), lp.display()),
    )
}

fn cmd_train_level1(a: &TrainLevel1Args, out: &mut dyn Write) -> Result<()> {
    let cfg = a.train.resolve(TrainConfig::default())?;
    let lex = load_lexicons(&a.dict.dicts)?;
    let ds = load_corpus(&a.corpus, &split_config(&cfg))?;
    let train: Vec<_> = ds.view(cfg.view, Some(Split::Train)).collect();
    let dir = &a.run.run_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let inputs = RunInputs {
        corpus: a.corpus.clone(),
        dicts: a.dict.dicts.clone(),
    };
    let log = MetricsLog::create(dir, &cfg)?;
    log.record(json!({"command": "train-level1", "config": cfg, "inputs": inputs}))?;
    if a.grid {
        return grid_search(a, &cfg, &ds, &lex, &log, out);
    }
    write_file(&dir.join(INPUTS_FILE), &serde_json::to_string_pretty(&inputs)?)?;
    let (model, history) = train_level1::<f64>(&train, &lex, &cfg, |_, st| log.epoch(1, "train", st))?;
    level1_checkpoint(&model, &cfg)?.save(dir.join(LEVEL1_FILE))?;
    let last = history.last().expect("at least one epoch");
    say(
        out,
        format!(
            "level 1: {} samples, {} epochs, train loss {:.4}, accuracy {:.4} -> {}",
            train.len(),
            history.len(),
            last.loss,
            last.accuracy,
            dir.join(LEVEL1_FILE).display()
        ),
    )
}

fn grid_search(
    a: &TrainLevel1Args,
    cfg: &TrainConfig,
    ds: &Dataset,
    lex: &Lexicons,
    log: &MetricsLog,
    out: &mut dyn Write,
) -> Result<()> {
    let train: Vec<_> = ds.view(cfg.view, Some(Split::Train)).collect();
    let mut test: Vec<_> = ds.view(cfg.view, Some(Split::Test)).collect();
    if test.is_empty() {
        test = ds.sentences(Some(Split::Test)).collect();
    }
    if test.is_empty() {
        return Err(Error::EmptyDataset("grid search needs test samples".into()));
    }
    let embeds = a.grid_embed.clone().unwrap_or_else(|| GRID_EMBED.to_vec());
    let ns = a.grid_n.clone().unwrap_or_else(|| GRID_N.to_vec());
    say(out, format!("{:>6} {:>4} {:>10} {:>6}", "E", "n", "best acc", "epoch"))?;
    for &embed_dim in &embeds {
        for &n in &ns {
            let cell = TrainConfig {
                embed_dim,
                n,
                ..cfg.clone()
            };
            let mut best = (f64::NEG_INFINITY, 0usize);
            train_level1::<f64>(&train, lex, &cell, |m: &Level1Model<f64>, st| {
                let data = level1_examples(m, test.iter().copied())?;
                let acc = evaluate(m, &data)?.1;
                if acc > best.0 {
                    best = (acc, st.epoch);
                }
                Ok(())
            })?;
            log.record(json!({
                "split": "grid",
                "embed_dim": embed_dim,
                "n": n,
                "best_test_accuracy": best.0,
                "best_epoch": best.1,
            }))?;
            say(out, format!("{embed_dim:>6} {n:>4} {:>10.4} {:>6}", best.0, best.1))?;
        }
    }
    Ok(())
}

fn cmd_distill(a: &DistillArgs, out: &mut dyn Write) -> Result<()> {
    let dir = &a.run.run_dir;
    let ckpt = load_checkpoint(&require_artifact(dir, LEVEL1_FILE, "train-level1")?)?;
    let (level1, cfg) = level1_from_checkpoint::<f64>(&ckpt)?;
    let corpus = match &a.corpus {
        Some(c) => c.clone(),
        None => read_inputs(dir)?.corpus,
    };
    let ds = load_corpus(&corpus, &split_config(&cfg))?;
    let sentences: Vec<_> = ds.sentences(None).collect();
    if sentences.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no sentence records", corpus.display())));
    }
    let distilled = distill_clauses(&level1, &sentences, &ClauseSplitter::default())?;
    write_file(&dir.join(DISTILLED_FILE), &distilled_to_jsonl(&distilled)?)?;
    let clauses: usize = distilled.iter().map(|s| s.clauses.len()).sum();
    MetricsLog::open(dir, &cfg)?.record(json!({"command": "distill", "sentences": distilled.len(), "clauses": clauses}))?;
    say(
        out,
        format!("distilled {} sentences ({clauses} clauses) -> {}", distilled.len(), dir.join(DISTILLED_FILE).display()),
    )
}

fn cmd_train_level2(a: &TrainLevel2Args, out: &mut dyn Write) -> Result<()> {
    let dir = &a.run.run_dir;
    let l1_path = require_artifact(dir, LEVEL1_FILE, "train-level1")?;
    let d_path = require_artifact(dir, DISTILLED_FILE, "distill")?;
    let l1_ckpt = load_checkpoint(&l1_path)?;
    let (level1, base) = level1_from_checkpoint::<f64>(&l1_ckpt)?;
    let cfg = a.train.resolve(base.clone())?;
    let distilled = distilled_from_jsonl(&read_input(&d_path, "distilled features")?)?;
    let train: Vec<_> = distilled.iter().filter(|s| s.split == Split::Train).cloned().collect();
    let log = MetricsLog::open(dir, &base)?;
    if cfg != base {
        log.record(json!({"command": "train-level2", "config": cfg}))?;
    }
    let (model, history) =
        train_level2::<f64>(&train, &level1.lexicons().conjunctions, &cfg, |_, st| log.epoch(2, "train", st))?;
    let l2_ckpt = level2_checkpoint(&model, &cfg)?;
    l2_ckpt.save(dir.join(LEVEL2_FILE))?;
    let bundle = Bundle {
        level1: l1_ckpt,
        level2: l2_ckpt,
    };
    write_file(&dir.join(BUNDLE_FILE), &bundle.to_json()?)?;
    let last = history.last().expect("at least one epoch");
    say(
        out,
        format!(
            "level 2: {} sentences, {} epochs, train loss {:.4}, accuracy {:.4} -> {}",
            train.len(),
            history.len(),
            last.loss,
            last.accuracy,
            dir.join(BUNDLE_FILE).display()
        ),
    )
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let bundle = load_bundle(a.run_dir.as_deref(), a.bundle.as_deref())?;
    let (level1, level2) = bundle.load_models::<f64>()?;
    let (_, cfg) = level1_from_checkpoint::<f64>(&bundle.level1)?;
    let corpus = match (&a.corpus, &a.run_dir) {
        (Some(c), _) => c.clone(),
        (None, Some(d)) => read_inputs(d)?.corpus,
        (None, None) => return Err(Error::Usage("give --corpus or --run-dir".into())),
    };
    let ds = load_corpus(&corpus, &split_config(&cfg))?;
    let split_name = if a.split == Split::Train { "train" } else { "test" };
    let (level, report) = if a.level1 {
        let samples: Vec<_> = ds.view(cfg.view, Some(a.split)).collect();
        (1, evaluate_level1(&level1, &samples)?)
    } else {
        let sentences: Vec<_> = ds.sentences(Some(a.split)).collect();
        let distilled = distill_clauses(&level1, &sentences, &ClauseSplitter::default())?;
        (2, evaluate_level2(&level2, &distilled)?)
    };
    if let Some(d) = &a.run_dir {
        MetricsLog::open(d, &cfg)?.record(json!({
            "command": "eval",
            "level": level,
            "split": split_name,
            "loss": report.loss,
            "accuracy": report.accuracy,
            "confusion": report.confusion,
        }))?;
    }
    say(out, &report)
}

fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let bundle = load_bundle(a.run_dir.as_deref(), a.bundle.as_deref())?;
    let (level1, level2): (Level1Model<f64>, Level2Model<f64>) = bundle.load_models()?;
    let mut texts = a.texts.clone();
    if let Some(p) = &a.input {
        texts.extend(read_input(p, "input file")?.lines().filter(|l| !l.trim().is_empty()).map(String::from));
    }
    if texts.is_empty() {
        return Err(Error::Usage("no texts to classify".into()));
    }
    let splitter = ClauseSplitter::default();
    for text in texts {
        let p = predict(&text, None, &level1, &level2, &splitter)?;
        jsonl_line(out, &json!({"text": text, "prediction": p}))?;
    }
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = SuiteConfig {
        eps: a.eps,
        seeds: (0..a.seeds).collect(),
        corrupt: a.corrupt.clone(),
        only: a.only.clone(),
        ..Default::default()
    };
    let report = run_suite(&cfg)?;
    say(out, &report)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Error::Oracle("analytic gradients disagree with finite differences".into()))
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Split(a) => cmd_split(a, out),
        Command::Aggregate(a) => cmd_aggregate(a, out),
        Command::Stats(a) => cmd_stats(a, out),
        Command::Lexrule(a) => cmd_lexrule(a, out),
        Command::DictStats(a) => cmd_dict_stats(a, out),
        Command::Synth(a) => cmd_synth(a, out),
        Command::TrainLevel1(a) => cmd_train_level1(a, out),
        Command::Distill(a) => cmd_distill(a, out),
        Command::TrainLevel2(a) => cmd_train_level2(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
