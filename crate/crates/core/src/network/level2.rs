//! Sentence-level classifier over per-clause level-1 features.
//!
//! Clause `t` enters as `[γ_t⁽¹⁾; y_t⁽¹⁾; ω^s_t; ω^e_t]`, where `ω^s`/`ω^e`
//! are the conjunction ρ-hot vectors of the clause's first and last words.
//! The bi-LSTM states are pooled by attention scored from
//! `[y_t; h_t; ω^s_t; ω^e_t]` over values `[h_t; y_t]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::level1::CLASSES;
use super::train::{cross_entropy, Classifier};
use crate::corpus::{Sentiment, Split};
use crate::encoding::RhoHotFamily;
use crate::error::{Error, Result};
use crate::lexicon::ConjunctionLexicon;
use crate::numerics::ops::{axpy, matvec_acc, matvec_t_acc, outer_acc, softmax_slice};
use crate::numerics::{ParamSet, Parameter};
use crate::recurrent::{AttentionCache, BiLstm, BiLstmCache, ScoreLayer};
use crate::scalar::Scalar;

/// One clause after level 1, with its boundary words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistilledClause {
    pub y: Vec<f64>,
    pub gamma: Vec<f64>,
    pub start: Option<String>,
    pub end: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistilledSentence {
    pub id: String,
    pub label: Sentiment,
    pub split: Split,
    pub clauses: Vec<DistilledClause>,
}

/// Level-2 input for one sentence, in model precision.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceInput<S> {
    pub ys: Vec<Vec<S>>,
    pub gammas: Vec<Vec<S>>,
    pub start: Vec<Option<usize>>,
    pub end: Vec<Option<usize>>,
}

pub(crate) struct Trace<S> {
    start: Vec<Option<usize>>,
    end: Vec<Option<usize>>,
    bilstm: BiLstmCache<S>,
    attention: AttentionCache<S>,
    gamma: Vec<S>,
    pub(crate) probs: Vec<S>,
    pub(crate) beta: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level2Model<S> {
    conjunctions: ConjunctionLexicon,
    collapse_y: bool,
    conj_in_input: bool,
    gamma_dim: usize,
    pub conj: Option<RhoHotFamily<S>>,
    pub lstm: BiLstm<S>,
    pub score: ScoreLayer<S>,
    pub out_w: Parameter<S>,
    pub out_b: Parameter<S>,
}

impl<S: Scalar> Level2Model<S> {
    pub fn new<R: Rng>(cfg: &TrainConfig, gamma_dim: usize, conjunctions: ConjunctionLexicon, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if gamma_dim == 0 {
            return Err(Error::config("clause feature width must be positive"));
        }
        let conj = if cfg.conjunction_embedding && !conjunctions.is_empty() {
            Some(RhoHotFamily::new("l2.rho_conj", conjunctions.len(), 1, cfg.rho)?)
        } else {
            None
        };
        let ow = conj.as_ref().map_or(0, RhoHotFamily::width);
        let yd = cfg.y_dim();
        let in_omega = if cfg.conjunction_in_input { 2 * ow } else { 0 };
        let lstm = BiLstm::new("l2.lstm", gamma_dim + yd + in_omega, cfg.hidden2, cfg.cell(), rng);
        let hw = lstm.output_dim();
        let score = ScoreLayer::new("l2.attn", yd + hw + 2 * ow, true, rng);
        Ok(Self {
            conjunctions,
            collapse_y: cfg.collapse_y,
            conj_in_input: cfg.conjunction_in_input,
            gamma_dim,
            conj,
            lstm,
            score,
            out_w: Parameter::zeros("l2.out.W", &[CLASSES, hw + yd]),
            out_b: Parameter::zeros("l2.out.b", &[CLASSES]),
        })
    }

    pub fn conjunctions(&self) -> &ConjunctionLexicon {
        &self.conjunctions
    }

    pub fn gamma_dim(&self) -> usize {
        self.gamma_dim
    }

    fn y_dim(&self) -> usize {
        if self.collapse_y {
            1
        } else {
            CLASSES
        }
    }

    fn omega_width(&self) -> usize {
        self.conj.as_ref().map_or(0, RhoHotFamily::width)
    }

    /// Per-clause bi-LSTM input width.
    pub fn input_dim(&self) -> usize {
        self.gamma_dim + self.y_dim() + if self.conj_in_input { 2 * self.omega_width() } else { 0 }
    }

    pub fn encode(&self, sentence: &DistilledSentence) -> Result<SentenceInput<S>> {
        if sentence.clauses.is_empty() {
            return Err(Error::data_in("sentence has zero clauses", &sentence.id));
        }
        let conj_index = |w: &Option<String>| w.as_deref().and_then(|w| self.conjunctions.index_of(w));
        let mut input = SentenceInput {
            ys: Vec::new(),
            gammas: Vec::new(),
            start: Vec::new(),
            end: Vec::new(),
        };
        for c in &sentence.clauses {
            if c.gamma.len() != self.gamma_dim || c.y.len() != CLASSES {
                return Err(Error::Checkpoint(format!(
                    "sentence {}: clause feature widths ({}, {}) do not match the level-2 model ({}, {CLASSES})",
                    sentence.id,
                    c.gamma.len(),
                    c.y.len(),
                    self.gamma_dim
                )));
            }
            let y = if self.collapse_y {
                let expected: f64 = Sentiment::ALL.iter().map(|s| s.score() * c.y[s.index()]).sum();
                vec![S::lit(expected)]
            } else {
                c.y.iter().map(|v| S::lit(*v)).collect()
            };
            input.ys.push(y);
            input.gammas.push(c.gamma.iter().map(|v| S::lit(*v)).collect());
            input.start.push(conj_index(&c.start));
            input.end.push(conj_index(&c.end));
        }
        Ok(input)
    }

    fn omega(&self, k: Option<usize>) -> Vec<S> {
        match &self.conj {
            Some(f) => {
                let mut v = vec![S::zero(); f.width()];
                f.write_into(k, &mut v);
                v
            }
            None => Vec::new(),
        }
    }

    pub(crate) fn forward(&self, input: &SentenceInput<S>) -> Result<Trace<S>> {
        let t_len = input.ys.len();
        if t_len == 0 {
            return Err(Error::shape("sentence with zero clauses"));
        }
        if input.gammas.len() != t_len || input.start.len() != t_len || input.end.len() != t_len {
            return Err(Error::shape("sentence streams differ in length"));
        }
        let ws: Vec<Vec<S>> = input.start.iter().map(|k| self.omega(*k)).collect();
        let we: Vec<Vec<S>> = input.end.iter().map(|k| self.omega(*k)).collect();
        let xs: Vec<Vec<S>> = (0..t_len)
            .map(|t| {
                let mut x = input.gammas[t].clone();
                x.extend_from_slice(&input.ys[t]);
                if self.conj_in_input {
                    x.extend_from_slice(&ws[t]);
                    x.extend_from_slice(&we[t]);
                }
                x
            })
            .collect();
        let (out, bilstm) = self.lstm.forward(&xs)?;
        let hs = out.concatenated();
        let u = (0..t_len)
            .map(|t| [&input.ys[t][..], &hs[t], &ws[t], &we[t]].concat())
            .collect();
        let v = (0..t_len).map(|t| [&hs[t][..], &input.ys[t]].concat()).collect();
        let (att, attention) = self.score.forward(u, v)?;
        let mut logits = self.out_b.value.data().to_vec();
        matvec_acc(self.out_w.value.data(), att.gamma.len(), &att.gamma, &mut logits);
        let probs = softmax_slice(&logits)?;
        Ok(Trace {
            start: input.start.clone(),
            end: input.end.clone(),
            bilstm,
            attention,
            gamma: att.gamma,
            probs,
            beta: att.alpha,
        })
    }

    pub(crate) fn backward(&mut self, trace: &Trace<S>, dlogits: &[S]) {
        let gw = trace.gamma.len();
        outer_acc(self.out_w.grad.data_mut(), dlogits, &trace.gamma);
        axpy(S::one(), dlogits, self.out_b.grad.data_mut());
        let mut dgamma = vec![S::zero(); gw];
        matvec_t_acc(self.out_w.value.data(), gw, dlogits, &mut dgamma);

        let (du, dv) = self.score.backward(&trace.attention, &dgamma);
        let yd = self.y_dim();
        let hw = self.lstm.output_dim();
        let ow = self.omega_width();
        let mut dh = Vec::with_capacity(du.len());
        for t in 0..du.len() {
            let mut d = dv[t][..hw].to_vec();
            axpy(S::one(), &du[t][yd..yd + hw], &mut d);
            dh.push(d);
            if let Some(f) = self.conj.as_mut() {
                let rest = &du[t][yd + hw..];
                f.accumulate_grad(trace.start[t], &rest[..ow]);
                f.accumulate_grad(trace.end[t], &rest[ow..]);
            }
        }
        let dxs = self.lstm.backward(&trace.bilstm, &dh);
        if self.conj_in_input {
            if let Some(f) = self.conj.as_mut() {
                let off = self.gamma_dim + yd;
                for (t, dx) in dxs.iter().enumerate() {
                    f.accumulate_grad(trace.start[t], &dx[off..off + ow]);
                    f.accumulate_grad(trace.end[t], &dx[off + ow..]);
                }
            }
        }
    }

    /// Class probabilities and clause attention weights `β`.
    pub fn predict(&self, input: &SentenceInput<S>) -> Result<(Vec<S>, Vec<S>)> {
        let tr = self.forward(input)?;
        Ok((tr.probs, tr.beta))
    }
}

impl<S: Scalar> ParamSet<S> for Level2Model<S> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<S>)) {
        if let Some(c) = &self.conj {
            f(&c.rho);
        }
        self.lstm.visit(f);
        self.score.visit(f);
        f(&self.out_w);
        f(&self.out_b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<S>)) {
        if let Some(c) = &mut self.conj {
            f(&mut c.rho);
        }
        self.lstm.visit_mut(f);
        self.score.visit_mut(f);
        f(&mut self.out_w);
        f(&mut self.out_b);
    }
}

impl<S: Scalar> Classifier<S> for Level2Model<S> {
    type Input = SentenceInput<S>;

    fn probabilities(&self, input: &SentenceInput<S>) -> Result<Vec<S>> {
        Ok(self.forward(input)?.probs)
    }

    fn loss_and_grad(&mut self, input: &SentenceInput<S>, label: usize) -> Result<(S, Vec<S>)> {
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
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> TrainConfig {
        TrainConfig {
            hidden2: 3,
            ..Default::default()
        }
    }

    fn conj() -> ConjunctionLexicon {
        ConjunctionLexicon::from_words(["but", "and", "so"])
    }

    fn sentence(n: usize, seed: u64) -> DistilledSentence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clauses = (0..n)
            .map(|i| {
                let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..1.0)).collect();
                let z: f64 = raw.iter().sum();
                DistilledClause {
                    y: raw.iter().map(|v| v / z).collect(),
                    gamma: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    start: Some(if i == 1 { "but" } else { "the" }.into()),
                    end: Some("good".into()),
                }
            })
            .collect();
        DistilledSentence {
            id: format!("s{seed}"),
            label: Sentiment::Positive,
            split: Split::Train,
            clauses,
        }
    }

    fn model(cfg: &TrainConfig) -> Level2Model<f64> {
        Level2Model::new(cfg, 4, conj(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn input_width() {
        let m = model(&cfg());
        assert_eq!(m.input_dim(), 4 + 3 + 2 * 3);
        let no_input = model(&TrainConfig {
            conjunction_in_input: false,
            ..cfg()
        });
        assert_eq!(no_input.input_dim(), 7);
        let collapsed = model(&TrainConfig {
            collapse_y: true,
            ..cfg()
        });
        assert_eq!(collapsed.input_dim(), 4 + 1 + 6);
    }

    #[test]
    fn fresh_model_uniform_and_beta_normalised() {
        let m = model(&cfg());
        let input = m.encode(&sentence(3, 2)).unwrap();
        assert_eq!(input.start, vec![None, Some(0), None]);
        let (p, beta) = m.predict(&input).unwrap();
        assert!(p.iter().all(|v| *v == 1.0 / 3.0));
        assert_eq!(beta.len(), 3);
        assert!((beta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(beta.iter().all(|b| *b > 0.0));
    }

    #[test]
    fn single_clause_and_errors() {
        let m = model(&cfg());
        let one = m.encode(&sentence(1, 3)).unwrap();
        let (_, beta) = m.predict(&one).unwrap();
        assert_eq!(beta, vec![1.0]);

        let mut empty = sentence(1, 3);
        empty.clauses.clear();
        assert!(matches!(m.encode(&empty), Err(Error::Data { .. })));

        let mut wide = sentence(2, 3);
        wide.clauses[0].gamma.push(0.0);
        assert!(matches!(m.encode(&wide), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn collapsed_y_is_expected_score() {
        let m = model(&TrainConfig {
            collapse_y: true,
            ..cfg()
        });
        let s = sentence(1, 4);
        let y = &s.clauses[0].y;
        let input = m.encode(&s).unwrap();
        assert!((input.ys[0][0] - (y[0] + 0.5 * y[1])).abs() < 1e-15);
    }

    #[test]
    fn random_probabilities_sum_to_one() {
        let mut m = model(&cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        m.out_w.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
        for seed in 0..10 {
            let p = m.probabilities(&m.encode(&sentence(1 + seed as usize % 4, seed)).unwrap()).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
