//! Clause-level classifier: token embeddings plus ρ-hot key-word and POS
//! embeddings feed a bi-LSTM, whose states are pooled (by default with
//! attention scored from the same lexicon embeddings) into the clause vector
//! `γ⁽¹⁾` and classified into three classes.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Pooling, TrainConfig};
use super::train::{cross_entropy, Classifier};
use crate::corpus::{ClauseInput, TokenMode};
use crate::encoding::RhoHotFamily;
use crate::error::{Error, Result};
use crate::lexicon::{attach_lexicon, KeyWordCategory, Lexicons, PosTag};
use crate::numerics::ops::{axpy, matvec_acc, matvec_t_acc, outer_acc, softmax_slice};
use crate::numerics::{ParamSet, Parameter};
use crate::recurrent::{sum_pool, AttentionCache, BiLstm, BiLstmCache, ScoreLayer};
use crate::scalar::Scalar;

pub const UNK: &str = "<unk>";
pub const CLASSES: usize = 3;
const EMBED_STD: f64 = 0.1;

/// Token vocabulary with `<unk>` at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

impl Vocab {
    /// Sorted distinct tokens, after `<unk>`.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut words: Vec<String> = tokens.into_iter().filter(|t| *t != UNK).map(String::from).collect();
        words.sort();
        words.dedup();
        words.insert(0, UNK.to_string());
        words.into()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// A clause as indices: token ids, key-word categories and POS tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedClause {
    pub ids: Vec<usize>,
    pub keyword: Vec<usize>,
    pub pos: Vec<usize>,
}

/// Level-1 output for one clause: `y⁽¹⁾` (class probabilities) and `γ⁽¹⁾`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseFeature<S> {
    pub y: Vec<S>,
    pub gamma: Vec<S>,
}

pub(crate) struct Trace<S> {
    enc: EncodedClause,
    bilstm: BiLstmCache<S>,
    attention: Option<AttentionCache<S>>,
    pub(crate) gamma: Vec<S>,
    pub(crate) probs: Vec<S>,
    pub(crate) alpha: Option<Vec<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level1Model<S> {
    vocab: Vocab,
    lexicons: Lexicons,
    mode: TokenMode,
    polar: bool,
    pooling: Pooling,
    embed_dim: usize,
    pub embedding: Parameter<S>,
    pub keyword: Option<RhoHotFamily<S>>,
    pub pos: Option<RhoHotFamily<S>>,
    pub lstm: BiLstm<S>,
    pub score: Option<ScoreLayer<S>>,
    pub out_w: Parameter<S>,
    pub out_b: Parameter<S>,
}

impl<S: Scalar> Level1Model<S> {
    pub fn new<R: Rng>(cfg: &TrainConfig, vocab: Vocab, lexicons: Lexicons, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if vocab.is_empty() {
            return Err(Error::config("empty vocabulary"));
        }
        let keyword = if cfg.keyword_embedding {
            Some(RhoHotFamily::new("l1.rho_keyword", KeyWordCategory::COUNT, cfg.n, cfg.rho)?)
        } else {
            None
        };
        let pos = if cfg.pos_embedding {
            Some(RhoHotFamily::new("l1.rho_pos", PosTag::COUNT, cfg.n, cfg.rho)?)
        } else {
            None
        };
        let kw_w = keyword.as_ref().map_or(0, RhoHotFamily::width);
        let pos_w = pos.as_ref().map_or(0, RhoHotFamily::width);
        let embedding = Parameter::gaussian("l1.embedding", &[vocab.len(), cfg.embed_dim], EMBED_STD, rng);
        let lstm = BiLstm::new("l1.lstm", cfg.embed_dim + kw_w + pos_w, cfg.hidden1, cfg.cell(), rng);
        let hw = lstm.output_dim();
        let score = match cfg.pooling {
            Pooling::Sum => None,
            Pooling::Plain => Some(ScoreLayer::new("l1.attn", hw, false, rng)),
            Pooling::Lex => Some(ScoreLayer::new("l1.attn", hw + kw_w, true, rng)),
            Pooling::LexPos => Some(ScoreLayer::new("l1.attn", hw + kw_w + pos_w, true, rng)),
        };
        Ok(Self {
            vocab,
            lexicons,
            mode: cfg.mode,
            polar: cfg.polar_embedding,
            pooling: cfg.pooling,
            embed_dim: cfg.embed_dim,
            embedding,
            keyword,
            pos,
            lstm,
            score,
            out_w: Parameter::zeros("l1.out.W", &[CLASSES, hw]),
            out_b: Parameter::zeros("l1.out.b", &[CLASSES]),
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn lexicons(&self) -> &Lexicons {
        &self.lexicons
    }

    pub fn mode(&self) -> TokenMode {
        self.mode
    }

    /// Width of one bi-LSTM input: `E + 6n + 8n` with both families on.
    pub fn input_dim(&self) -> usize {
        self.embed_dim + self.keyword_width() + self.pos_width()
    }

    /// Width of `γ⁽¹⁾`.
    pub fn feature_dim(&self) -> usize {
        self.lstm.output_dim()
    }

    fn keyword_width(&self) -> usize {
        self.keyword.as_ref().map_or(0, RhoHotFamily::width)
    }

    fn pos_width(&self) -> usize {
        self.pos.as_ref().map_or(0, RhoHotFamily::width)
    }

    pub fn encode(&self, clause: &ClauseInput) -> Result<EncodedClause> {
        if clause.tokens.is_empty() {
            return Err(Error::shape(format!("empty clause '{}'", clause.text)));
        }
        let ann = attach_lexicon(&clause.tokens, self.mode, clause.segmentation.as_ref(), &self.lexicons);
        let keyword = ann
            .iter()
            .map(|a| {
                let c = if !self.polar && a.category.is_polar() {
                    KeyWordCategory::Other
                } else {
                    a.category
                };
                c.index()
            })
            .collect();
        Ok(EncodedClause {
            ids: ann.iter().map(|a| self.vocab.id(&a.surface)).collect(),
            keyword,
            pos: ann.iter().map(|a| a.pos.index()).collect(),
        })
    }

    fn check(&self, enc: &EncodedClause) -> Result<()> {
        let t = enc.ids.len();
        if t == 0 {
            return Err(Error::shape("empty clause"));
        }
        if enc.keyword.len() != t || enc.pos.len() != t {
            return Err(Error::shape("clause annotation streams differ in length"));
        }
        if let Some(&bad) = enc.ids.iter().find(|&&i| i >= self.vocab.len()) {
            return Err(Error::Index {
                index: bad,
                count: self.vocab.len(),
            });
        }
        if enc.keyword.iter().any(|&k| k >= KeyWordCategory::COUNT) || enc.pos.iter().any(|&k| k >= PosTag::COUNT) {
            return Err(Error::shape("lexicon class out of range"));
        }
        Ok(())
    }

    fn lexicon_streams(&self, enc: &EncodedClause) -> (Vec<Vec<S>>, Vec<Vec<S>>) {
        let stream = |fam: &Option<RhoHotFamily<S>>, ks: &[usize]| -> Vec<Vec<S>> {
            ks.iter()
                .map(|&k| match fam {
                    Some(f) => {
                        let mut v = vec![S::zero(); f.width()];
                        f.write_into(Some(k), &mut v);
                        v
                    }
                    None => Vec::new(),
                })
                .collect()
        };
        (stream(&self.keyword, &enc.keyword), stream(&self.pos, &enc.pos))
    }

    pub(crate) fn forward(&self, enc: &EncodedClause) -> Result<Trace<S>> {
        self.check(enc)?;
        let (lex, pos) = self.lexicon_streams(enc);
        let xs: Vec<Vec<S>> = (0..enc.ids.len())
            .map(|t| {
                let mut x = Vec::with_capacity(self.input_dim());
                x.extend_from_slice(self.embedding.value.row(enc.ids[t]));
                x.extend_from_slice(&lex[t]);
                x.extend_from_slice(&pos[t]);
                x
            })
            .collect();
        let (out, bilstm) = self.lstm.forward(&xs)?;
        let hs = out.concatenated();
        let (gamma, attention) = match (&self.score, self.pooling) {
            (None, _) => (sum_pool(&hs)?, None),
            (Some(layer), pooling) => {
                let u: Vec<Vec<S>> = (0..hs.len())
                    .map(|t| {
                        let mut u = hs[t].clone();
                        if matches!(pooling, Pooling::Lex | Pooling::LexPos) {
                            u.extend_from_slice(&lex[t]);
                        }
                        if pooling == Pooling::LexPos {
                            u.extend_from_slice(&pos[t]);
                        }
                        u
                    })
                    .collect();
                let (o, cache) = layer.forward(u, hs)?;
                (o.gamma, Some(cache))
            }
        };
        let mut logits = self.out_b.value.data().to_vec();
        matvec_acc(self.out_w.value.data(), gamma.len(), &gamma, &mut logits);
        let probs = softmax_slice(&logits)?;
        Ok(Trace {
            enc: enc.clone(),
            bilstm,
            alpha: attention.as_ref().map(|a| a.alpha.clone()),
            attention,
            gamma,
            probs,
        })
    }

    /// Backpropagates `∂L/∂logits` through the trace.
    pub(crate) fn backward(&mut self, trace: &Trace<S>, dlogits: &[S]) {
        let gamma = &trace.gamma;
        outer_acc(self.out_w.grad.data_mut(), dlogits, gamma);
        axpy(S::one(), dlogits, self.out_b.grad.data_mut());
        let mut dgamma = vec![S::zero(); gamma.len()];
        matvec_t_acc(self.out_w.value.data(), gamma.len(), dlogits, &mut dgamma);

        let t_len = trace.enc.ids.len();
        let hw = self.lstm.output_dim();
        let kw_w = self.keyword_width();
        let dh: Vec<Vec<S>> = match (&mut self.score, &trace.attention) {
            (Some(layer), Some(cache)) => {
                let (du, dv) = layer.backward(cache, &dgamma);
                let mut dh = dv;
                for t in 0..t_len {
                    axpy(S::one(), &du[t][..hw], &mut dh[t]);
                    let rest = &du[t][hw..];
                    if matches!(self.pooling, Pooling::Lex | Pooling::LexPos) {
                        if let Some(f) = self.keyword.as_mut() {
                            f.accumulate_grad(Some(trace.enc.keyword[t]), &rest[..kw_w]);
                        }
                    }
                    if self.pooling == Pooling::LexPos {
                        if let Some(f) = self.pos.as_mut() {
                            f.accumulate_grad(Some(trace.enc.pos[t]), &rest[kw_w..]);
                        }
                    }
                }
                dh
            }
            _ => vec![dgamma; t_len],
        };
        let dxs = self.lstm.backward(&trace.bilstm, &dh);

        let e = self.embed_dim;
        for (t, dx) in dxs.iter().enumerate() {
            let id = trace.enc.ids[t];
            axpy(S::one(), &dx[..e], &mut self.embedding.grad.data_mut()[id * e..(id + 1) * e]);
            if let Some(f) = self.keyword.as_mut() {
                f.accumulate_grad(Some(trace.enc.keyword[t]), &dx[e..e + kw_w]);
            }
            if let Some(f) = self.pos.as_mut() {
                f.accumulate_grad(Some(trace.enc.pos[t]), &dx[e + kw_w..]);
            }
        }
    }

    pub fn feature(&self, enc: &EncodedClause) -> Result<ClauseFeature<S>> {
        let tr = self.forward(enc)?;
        Ok(ClauseFeature {
            y: tr.probs,
            gamma: tr.gamma,
        })
    }

    /// `(y⁽¹⁾, γ⁽¹⁾)` for a raw clause.
    pub fn clause_feature(&self, clause: &ClauseInput) -> Result<ClauseFeature<S>> {
        self.feature(&self.encode(clause)?)
    }

    /// Attention weights over the clause tokens, when pooling uses attention.
    pub fn attention_weights(&self, enc: &EncodedClause) -> Result<Option<Vec<S>>> {
        Ok(self.forward(enc)?.alpha)
    }
}

impl<S: Scalar> ParamSet<S> for Level1Model<S> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<S>)) {
        f(&self.embedding);
        if let Some(k) = &self.keyword {
            f(&k.rho);
        }
        if let Some(p) = &self.pos {
            f(&p.rho);
        }
        self.lstm.visit(f);
        if let Some(s) = &self.score {
            s.visit(f);
        }
        f(&self.out_w);
        f(&self.out_b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<S>)) {
        f(&mut self.embedding);
        if let Some(k) = &mut self.keyword {
            f(&mut k.rho);
        }
        if let Some(p) = &mut self.pos {
            f(&mut p.rho);
        }
        self.lstm.visit_mut(f);
        if let Some(s) = &mut self.score {
            s.visit_mut(f);
        }
        f(&mut self.out_w);
        f(&mut self.out_b);
    }
}

impl<S: Scalar> Classifier<S> for Level1Model<S> {
    type Input = EncodedClause;

    fn probabilities(&self, input: &EncodedClause) -> Result<Vec<S>> {
        Ok(self.forward(input)?.probs)
    }

    fn loss_and_grad(&mut self, input: &EncodedClause, label: usize) -> Result<(S, Vec<S>)> {
        let trace = self.forward(input)?;
        let loss = cross_entropy(&trace.probs, label);
        let mut d = trace.probs.clone();
        d[label] -= S::one();
        self.backward(&trace, &d);
        Ok((loss, trace.probs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recurrent::attention_plain;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            embed_dim: 4,
            n: 2,
            hidden1: 3,
            ..Default::default()
        }
    }

    fn lex() -> Lexicons {
        Lexicons::from_entries([("good", "positive"), ("bad", "negative"), ("not", "privative"), ("food", "noun")])
            .unwrap()
    }

    fn model(cfg: &TrainConfig) -> Level1Model<f64> {
        let vocab = Vocab::build(["the", "food", "is", "good", "bad", "not"]);
        Level1Model::new(cfg, vocab, lex(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap()
    }

    fn clause(text: &str) -> ClauseInput {
        ClauseInput::new(text, None, None, TokenMode::Word).unwrap()
    }

    #[test]
    fn vocab_unknowns_map_to_zero() {
        let v = Vocab::build(["b", "a", "b"]);
        assert_eq!(v.words(), &["<unk>", "a", "b"]);
        assert_eq!(v.id("zzz"), 0);
        assert_eq!(v.id("b"), 2);
        let back: Vocab = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn widths() {
        let m = model(&small_cfg());
        assert_eq!(m.input_dim(), 4 + 6 * 2 + 8 * 2);
        assert_eq!(m.feature_dim(), 6);
    }

    #[test]
    fn fresh_model_is_uniform_and_deterministic() {
        let m = model(&small_cfg());
        let a = m.clause_feature(&clause("the food is good")).unwrap();
        let b = m.clause_feature(&clause("the food is good")).unwrap();
        assert_eq!(a, b);
        assert!(a.y.iter().all(|p| *p == 1.0 / 3.0));
        assert_eq!(a.gamma.len(), 6);
    }

    #[test]
    fn empty_clause_is_shape_error() {
        let m = model(&small_cfg());
        let enc = EncodedClause {
            ids: vec![],
            keyword: vec![],
            pos: vec![],
        };
        assert!(matches!(m.feature(&enc), Err(Error::Shape(_))));
    }

    #[test]
    fn polar_ablation_masks_categories() {
        let m = model(&TrainConfig {
            polar_embedding: false,
            ..small_cfg()
        });
        let enc = m.encode(&clause("not good")).unwrap();
        assert_eq!(enc.keyword, vec![KeyWordCategory::Privative.index(), KeyWordCategory::Other.index()]);
    }

    #[test]
    fn lexicon_free_model_matches_plain_attention_reference() {
        let cfg = TrainConfig {
            keyword_embedding: false,
            pos_embedding: false,
            pooling: Pooling::LexPos,
            ..small_cfg()
        };
        let mut m = model(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        m.out_w.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let c = clause("the food is not bad");
        let enc = m.encode(&c).unwrap();
        let got = m.feature(&enc).unwrap();

        let xs: Vec<Vec<f64>> = enc.ids.iter().map(|&i| m.embedding.value.row(i).to_vec()).collect();
        let hs = m.lstm.forward(&xs).unwrap().0.concatenated();
        let w = m.score.as_ref().unwrap().w.value.data().to_vec();
        let gamma = attention_plain(&hs, &w).unwrap().gamma;
        let mut logits = vec![0.0; 3];
        matvec_acc(m.out_w.value.data(), gamma.len(), &gamma, &mut logits);
        let y = softmax_slice(&logits).unwrap();
        assert_eq!(got.gamma, gamma);
        assert_eq!(got.y, y);
    }
}
