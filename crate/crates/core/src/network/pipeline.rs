//! Staged training: level 1 on labelled clauses, distillation of every
//! sentence into clause features, level 2 on the distilled sentences with
//! level 1 frozen. Also evaluation, prediction and checkpoint plumbing.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::level1::{EncodedClause, Level1Model, Vocab, CLASSES};
use super::level2::{DistilledClause, DistilledSentence, Level2Model};
use super::train::{cross_entropy, evaluate, fit, Control, EpochStats, FitConfig};
use crate::corpus::{ClauseSplitter, RawSample, Sentiment, Split, Stage};
use crate::error::{Error, Result};
use crate::lexicon::{ConjunctionLexicon, LexiconEntry, Lexicons};
use crate::numerics::ops::argmax;
use crate::numerics::Checkpoint;
use crate::scalar::Scalar;

// Independent random streams derived from the one configured seed.
const LEVEL1_SHUFFLE: u64 = 0x6c31_7368;
const LEVEL2_INIT: u64 = 0x6c32_696e;
const LEVEL2_SHUFFLE: u64 = 0x6c32_7368;

pub const LEVEL1_KIND: &str = "level1";
pub const LEVEL2_KIND: &str = "level2";

fn stream(seed: u64, tag: u64) -> u64 {
    seed ^ tag
}

fn fit_config(cfg: &TrainConfig, seed: u64, epochs: usize) -> FitConfig {
    FitConfig {
        seed,
        epochs,
        batch_size: cfg.batch_size,
        optimizer: cfg.optimizer,
        lr: cfg.lr,
    }
}

/// Token vocabulary of the given samples, each read as one sequence.
pub fn build_vocab<'a>(samples: impl IntoIterator<Item = &'a RawSample>, cfg: &TrainConfig) -> Result<Vocab> {
    let mut tokens = Vec::new();
    for s in samples {
        tokens.extend(s.as_sequence(cfg.mode)?.tokens);
    }
    Ok(Vocab::build(tokens.iter().map(String::as_str)))
}

/// Each sample as one labelled sequence.
pub fn level1_examples<'a, S: Scalar>(
    model: &Level1Model<S>,
    samples: impl IntoIterator<Item = &'a RawSample>,
) -> Result<Vec<(EncodedClause, usize)>> {
    samples
        .into_iter()
        .map(|s| {
            let enc = model
                .encode(&s.as_sequence(model.mode())?)
                .map_err(|e| Error::data_in(e.to_string(), &s.id))?;
            Ok((enc, s.label.index()))
        })
        .collect()
}

fn early_stop<S: Scalar, M: super::train::Classifier<S>>(
    target: Option<f64>,
    model: &M,
    data: &[(M::Input, usize)],
) -> Result<Control> {
    match target {
        Some(t) if evaluate(model, data)?.1 >= t => Ok(Control::Stop),
        _ => Ok(Control::Continue),
    }
}

/// Builds the vocabulary from `train`, initialises level 1 from the seed and
/// trains it. `on_epoch` sees the model and statistics after every epoch.
pub fn train_level1<S: Scalar>(
    train: &[&RawSample],
    lexicons: &Lexicons,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&Level1Model<S>, &EpochStats) -> Result<()>,
) -> Result<(Level1Model<S>, Vec<EpochStats>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("no level-1 training samples".into()));
    }
    let vocab = build_vocab(train.iter().copied(), cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Level1Model::new(cfg, vocab, lexicons.clone(), &mut rng)?;
    let data = level1_examples(&model, train.iter().copied())?;
    let fc = fit_config(cfg, stream(cfg.seed, LEVEL1_SHUFFLE), cfg.epochs1);
    let history = fit(&mut model, &data, &fc, |m, st| {
        on_epoch(m, st)?;
        early_stop(cfg.stop_at_train_accuracy, m, &data)
    })?;
    Ok((model, history))
}

/// Runs level 1 over every clause of every sentence.
pub fn distill_clauses<S: Scalar>(
    level1: &Level1Model<S>,
    sentences: &[&RawSample],
    splitter: &ClauseSplitter,
) -> Result<Vec<DistilledSentence>> {
    sentences
        .iter()
        .map(|s| {
            let clauses = s.clauses(level1.mode(), splitter)?;
            if clauses.is_empty() {
                return Err(Error::data_in("sentence has zero clauses", &s.id));
            }
            let clauses = clauses
                .iter()
                .map(|c| {
                    let f = level1.clause_feature(c).map_err(|e| Error::data_in(e.to_string(), &s.id))?;
                    let (start, end) = c.boundary_words(splitter);
                    Ok(DistilledClause {
                        y: f.y.iter().map(|v| v.as_f64()).collect(),
                        gamma: f.gamma.iter().map(|v| v.as_f64()).collect(),
                        start: start.map(String::from),
                        end: end.map(String::from),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DistilledSentence {
                id: s.id.clone(),
                label: s.label,
                split: s.split,
                clauses,
            })
        })
        .collect()
}

pub fn distilled_to_jsonl(sentences: &[DistilledSentence]) -> Result<String> {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn distilled_from_jsonl(text: &str) -> Result<Vec<DistilledSentence>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::data_at(format!("distilled record: {e}"), i + 1)))
        .collect()
}

pub fn level2_examples<S: Scalar>(
    model: &Level2Model<S>,
    sentences: &[DistilledSentence],
) -> Result<Vec<(super::level2::SentenceInput<S>, usize)>> {
    sentences
        .iter()
        .map(|s| Ok((model.encode(s)?, s.label.index())))
        .collect()
}

pub fn train_level2<S: Scalar>(
    train: &[DistilledSentence],
    conjunctions: &ConjunctionLexicon,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&Level2Model<S>, &EpochStats) -> Result<()>,
) -> Result<(Level2Model<S>, Vec<EpochStats>)> {
    cfg.validate()?;
    let first = train
        .first()
        .ok_or_else(|| Error::EmptyDataset("no level-2 training sentences".into()))?;
    let gamma_dim = first
        .clauses
        .first()
        .ok_or_else(|| Error::data_in("sentence has zero clauses", &first.id))?
        .gamma
        .len();
    let mut rng = ChaCha8Rng::seed_from_u64(stream(cfg.seed, LEVEL2_INIT));
    let mut model = Level2Model::new(cfg, gamma_dim, conjunctions.clone(), &mut rng)?;
    let data = level2_examples(&model, train)?;
    let fc = fit_config(cfg, stream(cfg.seed, LEVEL2_SHUFFLE), cfg.epochs2);
    let history = fit(&mut model, &data, &fc, |m, st| {
        on_epoch(m, st)?;
        early_stop(cfg.stop_at_train_accuracy, m, &data)
    })?;
    Ok((model, history))
}

/// Accuracy, mean loss and a confusion matrix (rows gold, columns
/// predicted, both in positive/neutral/negative order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub confusion: [[usize; CLASSES]; CLASSES],
}

impl EvalReport {
    pub fn from_predictions(pairs: impl IntoIterator<Item = (usize, Vec<f64>)>) -> Result<Self> {
        let mut confusion = [[0usize; CLASSES]; CLASSES];
        let mut total = 0;
        let mut loss = 0.0;
        for (gold, probs) in pairs {
            confusion[gold][argmax(&probs)] += 1;
            loss += cross_entropy(&probs, gold);
            total += 1;
        }
        if total == 0 {
            return Err(Error::EmptyDataset("nothing to evaluate".into()));
        }
        let correct = (0..CLASSES).map(|k| confusion[k][k]).sum();
        Ok(Self {
            total,
            correct,
            accuracy: correct as f64 / total as f64,
            loss: loss / total as f64,
            confusion,
        })
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "accuracy {:.4} ({}/{})  loss {:.4}", self.accuracy, self.correct, self.total, self.loss)?;
        write!(f, "{:>10}", "gold\\pred")?;
        for s in Sentiment::ALL {
            write!(f, "{:>10}", s.name())?;
        }
        for s in Sentiment::ALL {
            write!(f, "\n{:>10}", s.name())?;
            for k in 0..CLASSES {
                write!(f, "{:>10}", self.confusion[s.index()][k])?;
            }
        }
        Ok(())
    }
}

pub fn evaluate_level1<S: Scalar>(model: &Level1Model<S>, samples: &[&RawSample]) -> Result<EvalReport> {
    let data = level1_examples(model, samples.iter().copied())?;
    let preds = data
        .iter()
        .map(|(x, y)| Ok((*y, model.feature(x)?.y.iter().map(|v| v.as_f64()).collect())))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_predictions(preds)
}

pub fn evaluate_level2<S: Scalar>(model: &Level2Model<S>, sentences: &[DistilledSentence]) -> Result<EvalReport> {
    let mut preds = Vec::with_capacity(sentences.len());
    for s in sentences {
        let (p, _) = model.predict(&model.encode(s)?)?;
        preds.push((s.label.index(), p.iter().map(|v| v.as_f64()).collect()));
    }
    EvalReport::from_predictions(preds)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClausePrediction {
    pub text: String,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub label: Sentiment,
    pub probabilities: Vec<f64>,
    pub clauses: Vec<ClausePrediction>,
    /// Attention weight of each clause.
    pub beta: Vec<f64>,
}

/// Splits `text` into clauses and runs both levels.
pub fn predict<S: Scalar>(
    text: &str,
    tokens: Option<Vec<String>>,
    level1: &Level1Model<S>,
    level2: &Level2Model<S>,
    splitter: &ClauseSplitter,
) -> Result<Prediction> {
    if text.trim().is_empty() {
        return Err(Error::data("empty text"));
    }
    let sample = RawSample {
        id: "input".into(),
        text: text.to_string(),
        tokens,
        pos: None,
        stage: Stage::Sentence,
        label: Sentiment::Neutral,
        annotator_scores: vec![0.5],
        mean_score: None,
        split: Split::Test,
    };
    let clause_texts: Vec<String> = sample.clauses(level1.mode(), splitter)?.into_iter().map(|c| c.text).collect();
    let distilled = distill_clauses(level1, &[&sample], splitter)?.remove(0);
    let (probs, beta) = level2.predict(&level2.encode(&distilled)?)?;
    let probabilities: Vec<f64> = probs.iter().map(|v| v.as_f64()).collect();
    Ok(Prediction {
        label: Sentiment::from_index(argmax(&probabilities))?,
        clauses: clause_texts
            .into_iter()
            .zip(&distilled.clauses)
            .map(|(text, c)| ClausePrediction { text, y: c.y.clone() })
            .collect(),
        beta: beta.iter().map(|v| v.as_f64()).collect(),
        probabilities,
    })
}

#[derive(Serialize, Deserialize)]
struct Level1Meta {
    config: TrainConfig,
    vocab: Vocab,
    lexicon: Vec<LexiconEntry>,
}

#[derive(Serialize, Deserialize)]
struct Level2Meta {
    config: TrainConfig,
    gamma_dim: usize,
    conjunctions: Vec<String>,
}

fn expect_kind(ckpt: &Checkpoint, kind: &str) -> Result<()> {
    if ckpt.kind != kind {
        return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found '{}'", ckpt.kind)));
    }
    Ok(())
}

fn meta<T: for<'de> Deserialize<'de>>(ckpt: &Checkpoint) -> Result<T> {
    serde_json::from_value(ckpt.metadata.clone())
        .map_err(|e| Error::Checkpoint(format!("{} checkpoint metadata: {e}", ckpt.kind)))
}

pub fn level1_checkpoint<S: Scalar>(model: &Level1Model<S>, cfg: &TrainConfig) -> Result<Checkpoint> {
    let m = Level1Meta {
        config: cfg.clone(),
        vocab: model.vocab().clone(),
        lexicon: model.lexicons().to_entries(),
    };
    Ok(Checkpoint::capture(LEVEL1_KIND, serde_json::to_value(m)?, model))
}

pub fn level1_from_checkpoint<S: Scalar>(ckpt: &Checkpoint) -> Result<(Level1Model<S>, TrainConfig)> {
    expect_kind(ckpt, LEVEL1_KIND)?;
    let m: Level1Meta = meta(ckpt)?;
    let lex = Lexicons::from_serialized(&m.lexicon)?;
    let mut model = Level1Model::new(&m.config, m.vocab, lex, &mut ChaCha8Rng::seed_from_u64(0))?;
    ckpt.restore(&mut model)?;
    Ok((model, m.config))
}

pub fn level2_checkpoint<S: Scalar>(model: &Level2Model<S>, cfg: &TrainConfig) -> Result<Checkpoint> {
    let m = Level2Meta {
        config: cfg.clone(),
        gamma_dim: model.gamma_dim(),
        conjunctions: model.conjunctions().words().to_vec(),
    };
    Ok(Checkpoint::capture(LEVEL2_KIND, serde_json::to_value(m)?, model))
}

pub fn level2_from_checkpoint<S: Scalar>(ckpt: &Checkpoint) -> Result<(Level2Model<S>, TrainConfig)> {
    expect_kind(ckpt, LEVEL2_KIND)?;
    let m: Level2Meta = meta(ckpt)?;
    let conj = ConjunctionLexicon::from_words(&m.conjunctions);
    let mut model = Level2Model::new(&m.config, m.gamma_dim, conj, &mut ChaCha8Rng::seed_from_u64(0))?;
    ckpt.restore(&mut model)?;
    Ok((model, m.config))
}

/// Both levels in one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub level1: Checkpoint,
    pub level2: Checkpoint,
}

impl Bundle {
    pub fn load_models<S: Scalar>(&self) -> Result<(Level1Model<S>, Level2Model<S>)> {
        let (l1, _) = level1_from_checkpoint(&self.level1)?;
        let (l2, _) = level2_from_checkpoint(&self.level2)?;
        if l2.gamma_dim() != l1.feature_dim() {
            return Err(Error::Checkpoint(format!(
                "level-2 expects clause features of width {}, level 1 produces {}",
                l2.gamma_dim(),
                l1.feature_dim()
            )));
        }
        Ok((l1, l2))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let b: Self = serde_json::from_str(s).map_err(|e| Error::Checkpoint(format!("bundle: {e}")))?;
        expect_kind(&b.level1, LEVEL1_KIND)?;
        expect_kind(&b.level2, LEVEL2_KIND)?;
        Ok(b)
    }
}
