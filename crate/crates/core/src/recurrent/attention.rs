//! Sum pooling and softmax attention over positions.
//!
//! Every attention variant scores each position with one scalar
//! `s_t = w · u_t (+ b)` over a per-position score input `u_t`, normalises
//! with a softmax across positions and returns `γ = Σ_t α_t v_t` over a
//! per-position value `v_t`. The variants differ only in how `u_t` and `v_t`
//! are assembled.

use rand::Rng;

use super::lstm::INIT_BOUND;
use crate::error::{Error, Result};
use crate::numerics::ops::{axpy, dot, softmax_slice};
use crate::numerics::{ParamSet, Parameter, Tensor};
use crate::scalar::Scalar;

/// Scoring weights `w` (one output row) and optional bias `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLayer<S> {
    pub w: Parameter<S>,
    pub b: Option<Parameter<S>>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<S> {
    pub alpha: Vec<S>,
    score_inputs: Vec<Vec<S>>,
    values: Vec<Vec<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput<S> {
    pub gamma: Vec<S>,
    pub alpha: Vec<S>,
}

impl<S: Scalar> ScoreLayer<S> {
    pub fn new<R: Rng>(prefix: &str, width: usize, with_bias: bool, rng: &mut R) -> Self {
        Self {
            w: Parameter::uniform(format!("{prefix}.W"), &[width], INIT_BOUND, rng),
            b: with_bias.then(|| Parameter::zeros(format!("{prefix}.b"), &[1])),
        }
    }

    pub fn from_weights(prefix: &str, w: Vec<S>, b: Option<S>) -> Result<Self> {
        Ok(Self {
            w: Parameter::new(format!("{prefix}.W"), Tensor::vector(w)?),
            b: match b {
                Some(b) => Some(Parameter::new(format!("{prefix}.b"), Tensor::scalar(b)?)),
                None => None,
            },
        })
    }

    pub fn width(&self) -> usize {
        self.w.len()
    }

    pub fn scores(&self, score_inputs: &[Vec<S>]) -> Result<Vec<S>> {
        let bias = self.b.as_ref().map_or(S::zero(), |b| b.value.data()[0]);
        score_inputs
            .iter()
            .map(|u| {
                if u.len() != self.width() {
                    return Err(Error::shape(format!(
                        "attention score input has width {}, weights expect {}",
                        u.len(),
                        self.width()
                    )));
                }
                Ok(dot(self.w.value.data(), u) + bias)
            })
            .collect()
    }

    pub fn forward(&self, score_inputs: Vec<Vec<S>>, values: Vec<Vec<S>>) -> Result<(AttentionOutput<S>, AttentionCache<S>)> {
        if score_inputs.is_empty() {
            return Err(Error::shape("attention over zero positions"));
        }
        if score_inputs.len() != values.len() {
            return Err(Error::shape(format!(
                "{} score inputs but {} values",
                score_inputs.len(),
                values.len()
            )));
        }
        let vdim = values[0].len();
        if values.iter().any(|v| v.len() != vdim) {
            return Err(Error::shape("attention values have unequal widths"));
        }
        let alpha = softmax_slice(&self.scores(&score_inputs)?)?;
        let mut gamma = vec![S::zero(); vdim];
        for (a, v) in alpha.iter().zip(&values) {
            axpy(*a, v, &mut gamma);
        }
        let out = AttentionOutput {
            gamma,
            alpha: alpha.clone(),
        };
        Ok((
            out,
            AttentionCache {
                alpha,
                score_inputs,
                values,
            },
        ))
    }

    /// Returns `(∂L/∂u_t, ∂L/∂v_t)` and accumulates weight gradients.
    pub fn backward(&mut self, cache: &AttentionCache<S>, dgamma: &[S]) -> (Vec<Vec<S>>, Vec<Vec<S>>) {
        let dalpha: Vec<S> = cache.values.iter().map(|v| dot(dgamma, v)).collect();
        let mean: S = cache.alpha.iter().zip(&dalpha).map(|(a, d)| *a * *d).sum();
        let dscore: Vec<S> = cache.alpha.iter().zip(&dalpha).map(|(a, d)| *a * (*d - mean)).collect();

        let mut du = Vec::with_capacity(dscore.len());
        for (ds, u) in dscore.iter().zip(&cache.score_inputs) {
            axpy(*ds, u, self.w.grad.data_mut());
            du.push(self.w.value.data().iter().map(|w| *w * *ds).collect());
        }
        if let Some(b) = self.b.as_mut() {
            b.grad.data_mut()[0] += dscore.iter().copied().sum::<S>();
        }
        let dv = cache
            .alpha
            .iter()
            .map(|a| dgamma.iter().map(|g| *g * *a).collect())
            .collect();
        (du, dv)
    }
}

impl<S: Scalar> ParamSet<S> for ScoreLayer<S> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<S>)) {
        f(&self.w);
        if let Some(b) = &self.b {
            f(b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<S>)) {
        f(&mut self.w);
        if let Some(b) = &mut self.b {
            f(b);
        }
    }
}

/// `v = Σ_t h_t`.
pub fn sum_pool<S: Scalar>(hs: &[Vec<S>]) -> Result<Vec<S>> {
    let first = hs.first().ok_or_else(|| Error::shape("sum pooling over zero positions"))?;
    let mut v = vec![S::zero(); first.len()];
    for h in hs {
        if h.len() != v.len() {
            return Err(Error::shape("sum pooling over unequal widths"));
        }
        axpy(S::one(), h, &mut v);
    }
    Ok(v)
}

fn concat<S: Scalar>(parts: &[&[S]]) -> Vec<S> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn check_streams(len: usize, streams: &[(&str, usize)]) -> Result<()> {
    for (name, n) in streams {
        if *n != len {
            return Err(Error::shape(format!("{name} has {n} positions, expected {len}")));
        }
    }
    Ok(())
}

/// `α = softmax(wᵀH)`, `γ = Σ α_t h_t`.
pub fn attention_plain<S: Scalar>(hs: &[Vec<S>], w: &[S]) -> Result<AttentionOutput<S>> {
    let layer = ScoreLayer::from_weights("attn", w.to_vec(), None)?;
    Ok(layer.forward(hs.to_vec(), hs.to_vec())?.0)
}

/// Scores from `[h_t; l_t]`; `γ` still sums `h_t` only.
pub fn attention_lex<S: Scalar>(hs: &[Vec<S>], lex: &[Vec<S>], layer: &ScoreLayer<S>) -> Result<AttentionOutput<S>> {
    check_streams(hs.len(), &[("lexicon stream", lex.len())])?;
    let u = hs.iter().zip(lex).map(|(h, l)| concat(&[h, l])).collect();
    Ok(layer.forward(u, hs.to_vec())?.0)
}

/// Scores from `[h_t; l_t; η_t]` with `η_t` the POS embedding.
pub fn attention_lex_pos<S: Scalar>(
    hs: &[Vec<S>],
    lex: &[Vec<S>],
    pos: &[Vec<S>],
    layer: &ScoreLayer<S>,
) -> Result<AttentionOutput<S>> {
    check_streams(hs.len(), &[("lexicon stream", lex.len()), ("POS stream", pos.len())])?;
    let u = (0..hs.len()).map(|t| concat(&[&hs[t], &lex[t], &pos[t]])).collect();
    Ok(layer.forward(u, hs.to_vec())?.0)
}

/// Clause-level attention: scores from `[y_t; h_t; ω^s_t; ω^e_t]`, values
/// `[h_t; y_t]`.
pub fn attention_conj<S: Scalar>(
    ys: &[Vec<S>],
    hs: &[Vec<S>],
    omega_start: &[Vec<S>],
    omega_end: &[Vec<S>],
    layer: &ScoreLayer<S>,
) -> Result<AttentionOutput<S>> {
    check_streams(
        hs.len(),
        &[
            ("clause scores", ys.len()),
            ("start conjunctions", omega_start.len()),
            ("end conjunctions", omega_end.len()),
        ],
    )?;
    let u = (0..hs.len())
        .map(|t| concat(&[&ys[t], &hs[t], &omega_start[t], &omega_end[t]]))
        .collect();
    let v = (0..hs.len()).map(|t| concat(&[&hs[t], &ys[t]])).collect();
    Ok(layer.forward(u, v)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    fn mean(rows: &[Vec<f64>]) -> Vec<f64> {
        let mut m = sum_pool(rows).unwrap();
        m.iter_mut().for_each(|v| *v /= rows.len() as f64);
        m
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn sum_pool_cases() {
        let h = vec![vec![1.0, -2.0]];
        assert_eq!(sum_pool(&h).unwrap(), h[0]);
        assert_eq!(sum_pool(&[h[0].clone(), h[0].clone()]).unwrap(), vec![2.0, -4.0]);
        let hs = rand_rows(4, 3, 1);
        let mut perm = hs.clone();
        perm.swap(0, 3);
        perm.swap(1, 2);
        assert!(close(&sum_pool(&hs).unwrap(), &sum_pool(&perm).unwrap(), 1e-15));
    }

    #[test]
    fn plain_zero_weights_is_mean() {
        let hs = rand_rows(5, 3, 2);
        let out = attention_plain(&hs, &[0.0; 3]).unwrap();
        assert!(close(&out.gamma, &mean(&hs), 1e-15));
        let single = attention_plain(&hs[..1], &[3.0, -1.0, 2.0]).unwrap();
        assert_eq!(single.gamma, hs[0]);
    }

    #[test]
    fn plain_matches_explicit_softmax_sum() {
        let hs = rand_rows(4, 3, 3);
        let w = [0.7, -1.2, 0.4];
        let s: Vec<f64> = hs.iter().map(|h| h.iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
        let z: f64 = s.iter().map(|v| v.exp()).sum();
        let mut expect = vec![0.0; 3];
        for (h, sv) in hs.iter().zip(&s) {
            for k in 0..3 {
                expect[k] += sv.exp() / z * h[k];
            }
        }
        let out = attention_plain(&hs, &w).unwrap();
        assert!(close(&out.gamma, &expect, 1e-14));
        assert!((out.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lexicon_steers_attention() {
        let hs = vec![vec![0.2, 0.2]; 3];
        let lex = vec![vec![0.5, 0.0], vec![0.0, 0.5], vec![0.0, 0.0]];
        let layer = ScoreLayer::from_weights("a", vec![0.0, 0.0, 2.0, -1.0], Some(0.0)).unwrap();
        let out = attention_lex(&hs, &lex, &layer).unwrap();
        // scores 1, -0.5, 0
        let z = 1f64.exp() + (-0.5f64).exp() + 1.0;
        assert!((out.alpha[0] - 1f64.exp() / z).abs() < 1e-15);
        assert!(out.alpha[0] > out.alpha[2] && out.alpha[2] > out.alpha[1]);

        let zero = ScoreLayer::from_weights("a", vec![0.0; 4], Some(0.0)).unwrap();
        let u = attention_lex(&hs, &lex, &zero).unwrap();
        assert!(u.alpha.iter().all(|a| (a - 1.0 / 3.0).abs() < 1e-15));

        let shifted = ScoreLayer::from_weights("a", vec![0.0, 0.0, 2.0, -1.0], Some(37.5)).unwrap();
        let s = attention_lex(&hs, &lex, &shifted).unwrap();
        assert!(close(&s.alpha, &out.alpha, 1e-15));
    }

    #[test]
    fn lex_pos_reduces_to_lex_with_zero_pos() {
        let hs = rand_rows(4, 3, 4);
        let lex = rand_rows(4, 2, 5);
        let pos = vec![vec![0.0; 3]; 4];
        let w = vec![0.3, -0.2, 0.9, 1.1, -0.4];
        let with_pos = ScoreLayer::from_weights("a", [w.clone(), vec![0.5, -2.0, 0.8]].concat(), Some(0.1)).unwrap();
        let without = ScoreLayer::from_weights("a", w, Some(0.1)).unwrap();
        let a = attention_lex_pos(&hs, &lex, &pos, &with_pos).unwrap();
        let b = attention_lex(&hs, &lex, &without).unwrap();
        assert!(close(&a.gamma, &b.gamma, 1e-15));
        assert!(attention_lex_pos(&hs, &lex, &pos[..2], &with_pos).is_err());
    }

    #[test]
    fn lex_pos_matches_direct_evaluation() {
        let hs = rand_rows(3, 2, 6);
        let lex = rand_rows(3, 2, 7);
        let pos = rand_rows(3, 1, 8);
        let w = [0.5, -0.3, 1.2, 0.8, -1.5];
        let layer = ScoreLayer::from_weights("a", w.to_vec(), Some(0.2)).unwrap();
        let s: Vec<f64> = (0..3)
            .map(|t| {
                let u = [hs[t][0], hs[t][1], lex[t][0], lex[t][1], pos[t][0]];
                u.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.2
            })
            .collect();
        let z: f64 = s.iter().map(|v| v.exp()).sum();
        let expect: Vec<f64> = (0..2).map(|k| (0..3).map(|t| s[t].exp() / z * hs[t][k]).sum()).collect();
        let out = attention_lex_pos(&hs, &lex, &pos, &layer).unwrap();
        assert!(close(&out.gamma, &expect, 1e-14));
    }

    #[test]
    fn conj_cases() {
        let ys = rand_rows(3, 3, 9);
        let hs = rand_rows(3, 2, 10);
        let ws = rand_rows(3, 2, 11);
        let we = rand_rows(3, 2, 12);
        let zero = ScoreLayer::from_weights("b", vec![0.0; 9], Some(0.0)).unwrap();
        let out = attention_conj(&ys, &hs, &ws, &we, &zero).unwrap();
        let cat: Vec<Vec<f64>> = (0..3).map(|t| [hs[t].clone(), ys[t].clone()].concat()).collect();
        assert!(close(&out.gamma, &mean(&cat), 1e-15));

        let single = attention_conj(&ys[..1], &hs[..1], &ws[..1], &we[..1], &zero).unwrap();
        assert_eq!(single.gamma, cat[0]);

        let w: Vec<f64> = (0..9).map(|k| 0.3 * k as f64 - 1.0).collect();
        let layer = ScoreLayer::from_weights("b", w.clone(), Some(-0.4)).unwrap();
        let s: Vec<f64> = (0..3)
            .map(|t| {
                let u: Vec<f64> = [&ys[t][..], &hs[t][..], &ws[t][..], &we[t][..]].concat();
                u.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - 0.4
            })
            .collect();
        let z: f64 = s.iter().map(|v| v.exp()).sum();
        let expect: Vec<f64> = (0..5).map(|k| (0..3).map(|t| s[t].exp() / z * cat[t][k]).sum()).collect();
        let out = attention_conj(&ys, &hs, &ws, &we, &layer).unwrap();
        assert!(close(&out.gamma, &expect, 1e-14));
        assert!(attention_conj(&ys[..2], &hs, &ws, &we, &layer).is_err());
    }
}
