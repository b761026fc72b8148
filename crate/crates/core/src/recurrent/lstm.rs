//! LSTM block whose gates read the cell state alongside `[h_{t−1}, x_t]`:
//!
//! ```text
//! i_t = σ(W_i [c_{t−1}, h_{t−1}, x_t] + b_i)
//! f_t = σ(W_f [c_{t−1}, h_{t−1}, x_t] + b_f)
//! d_t = g(W_d [c_{t−1}, h_{t−1}, x_t] + b_d)      g = σ by default
//! c_t = i_t ⊙ d_t + f_t ⊙ c_{t−1}                 (or f_t ⊙ d_{t−1})
//! o_t = σ(W_o [c_t, h_{t−1}, x_t] + b_o)
//! h_t = o_t ⊙ tanh(c_t)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ops::{matvec_acc, matvec_t_acc, outer_acc};
use crate::numerics::{Activation, ParamSet, Parameter};
use crate::scalar::Scalar;

/// Weight init bound for recurrent and attention weights.
pub const INIT_BOUND: f64 = 0.08;

/// What the forget gate multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellRecurrence {
    /// `f_t ⊙ c_{t−1}`.
    #[default]
    Standard,
    /// `f_t ⊙ d_{t−1}`, the previous candidate.
    PreviousCandidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellConfig {
    pub candidate: Activation,
    pub recurrence: CellRecurrence,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            candidate: Activation::Sigmoid,
            recurrence: CellRecurrence::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<S> {
    pub w_i: Parameter<S>,
    pub w_f: Parameter<S>,
    pub w_o: Parameter<S>,
    pub w_d: Parameter<S>,
    pub b_i: Parameter<S>,
    pub b_f: Parameter<S>,
    pub b_o: Parameter<S>,
    pub b_d: Parameter<S>,
    hidden: usize,
    input_dim: usize,
    pub cell: CellConfig,
}

/// Recurrent state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState<S> {
    pub h: Vec<S>,
    pub c: Vec<S>,
    /// Previous candidate; only read by [`CellRecurrence::PreviousCandidate`].
    pub d: Vec<S>,
}

impl<S: Scalar> CellState<S> {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![S::zero(); hidden],
            c: vec![S::zero(); hidden],
            d: vec![S::zero(); hidden],
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct StepCache<S> {
    z: Vec<S>,
    zo: Vec<S>,
    i: Vec<S>,
    f: Vec<S>,
    o: Vec<S>,
    d: Vec<S>,
    c_prev: Vec<S>,
    d_prev: Vec<S>,
    tanh_c: Vec<S>,
}

/// Upstream gradients flowing into a step from the step after it.
#[derive(Debug, Clone)]
pub struct StateGrad<S> {
    pub h: Vec<S>,
    pub c: Vec<S>,
    pub d: Vec<S>,
}

impl<S: Scalar> StateGrad<S> {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![S::zero(); hidden],
            c: vec![S::zero(); hidden],
            d: vec![S::zero(); hidden],
        }
    }
}

impl<S: Scalar> LstmParams<S> {
    pub fn new<R: Rng>(prefix: &str, input_dim: usize, hidden: usize, cell: CellConfig, rng: &mut R) -> Self {
        let width = 2 * hidden + input_dim;
        let w = |name: &str, rng: &mut R| Parameter::uniform(format!("{prefix}.{name}"), &[hidden, width], INIT_BOUND, rng);
        let b = |name: &str| Parameter::zeros(format!("{prefix}.{name}"), &[hidden]);
        Self {
            w_i: w("W_i", rng),
            w_f: w("W_f", rng),
            w_o: w("W_o", rng),
            w_d: w("W_d", rng),
            b_i: b("b_i"),
            b_f: b("b_f"),
            b_o: b("b_o"),
            b_d: b("b_d"),
            hidden,
            input_dim,
            cell,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn width(&self) -> usize {
        2 * self.hidden + self.input_dim
    }

    fn check_input(&self, x: &[S]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::shape(format!(
                "LSTM expects input width {}, got {}",
                self.input_dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// One forward step.
    pub fn step(&self, x: &[S], prev: &CellState<S>) -> Result<(CellState<S>, StepCache<S>)> {
        self.check_input(x)?;
        let hdim = self.hidden;
        if prev.h.len() != hdim || prev.c.len() != hdim || prev.d.len() != hdim {
            return Err(Error::shape(format!("LSTM state width must be {hdim}")));
        }
        let width = self.width();
        let mut z = Vec::with_capacity(width);
        z.extend_from_slice(&prev.c);
        z.extend_from_slice(&prev.h);
        z.extend_from_slice(x);

        let gate = |w: &Parameter<S>, b: &Parameter<S>, input: &[S], act: Activation| {
            let mut a = b.value.data().to_vec();
            matvec_acc(w.value.data(), width, input, &mut a);
            a.iter_mut().for_each(|v| *v = act.apply(*v));
            a
        };
        let i = gate(&self.w_i, &self.b_i, &z, Activation::Sigmoid);
        let f = gate(&self.w_f, &self.b_f, &z, Activation::Sigmoid);
        let d = gate(&self.w_d, &self.b_d, &z, self.cell.candidate);
        let carried = match self.cell.recurrence {
            CellRecurrence::Standard => &prev.c,
            CellRecurrence::PreviousCandidate => &prev.d,
        };
        let c: Vec<S> = (0..hdim).map(|k| i[k] * d[k] + f[k] * carried[k]).collect();

        let mut zo = z.clone();
        zo[..hdim].copy_from_slice(&c);
        let o = gate(&self.w_o, &self.b_o, &zo, Activation::Sigmoid);
        let tanh_c: Vec<S> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<S> = (0..hdim).map(|k| o[k] * tanh_c[k]).collect();

        let cache = StepCache {
            z,
            zo,
            i,
            f,
            o,
            d: d.clone(),
            c_prev: prev.c.clone(),
            d_prev: prev.d.clone(),
            tanh_c,
        };
        Ok((CellState { h, c, d }, cache))
    }

    /// Backward through one step. `dh_out` is the external gradient on
    /// `h_t`; `next` carries gradients from step t+1 and is replaced with the
    /// gradients for step t−1. Returns `∂L/∂x_t`.
    pub fn step_backward(&mut self, cache: &StepCache<S>, dh_out: &[S], next: &mut StateGrad<S>) -> Vec<S> {
        let hdim = self.hidden;
        let width = self.width();
        let one = S::one();

        let dh: Vec<S> = (0..hdim).map(|k| dh_out[k] + next.h[k]).collect();
        let da_o: Vec<S> = (0..hdim)
            .map(|k| dh[k] * cache.tanh_c[k] * cache.o[k] * (one - cache.o[k]))
            .collect();
        outer_acc(self.w_o.grad.data_mut(), &da_o, &cache.zo);
        add_into(self.b_o.grad.data_mut(), &da_o);
        let mut dzo = vec![S::zero(); width];
        matvec_t_acc(self.w_o.value.data(), width, &da_o, &mut dzo);

        let dc: Vec<S> = (0..hdim)
            .map(|k| {
                next.c[k] + dh[k] * cache.o[k] * (one - cache.tanh_c[k] * cache.tanh_c[k]) + dzo[k]
            })
            .collect();

        let literal = self.cell.recurrence == CellRecurrence::PreviousCandidate;
        let carried = if literal { &cache.d_prev } else { &cache.c_prev };
        let da_i: Vec<S> = (0..hdim)
            .map(|k| dc[k] * cache.d[k] * cache.i[k] * (one - cache.i[k]))
            .collect();
        let da_f: Vec<S> = (0..hdim)
            .map(|k| dc[k] * carried[k] * cache.f[k] * (one - cache.f[k]))
            .collect();
        let da_d: Vec<S> = (0..hdim)
            .map(|k| (dc[k] * cache.i[k] + next.d[k]) * self.cell.candidate.derivative_from_output(cache.d[k]))
            .collect();

        let mut dz = vec![S::zero(); width];
        for (w, b, da) in [
            (&mut self.w_i, &mut self.b_i, &da_i),
            (&mut self.w_f, &mut self.b_f, &da_f),
            (&mut self.w_d, &mut self.b_d, &da_d),
        ] {
            outer_acc(w.grad.data_mut(), da, &cache.z);
            add_into(b.grad.data_mut(), da);
            matvec_t_acc(w.value.data(), width, da, &mut dz);
        }

        for k in 0..hdim {
            let through_forget = dc[k] * cache.f[k];
            next.h[k] = dz[hdim + k] + dzo[hdim + k];
            if literal {
                next.c[k] = dz[k];
                next.d[k] = through_forget;
            } else {
                next.c[k] = dz[k] + through_forget;
                next.d[k] = S::zero();
            }
        }
        (0..self.input_dim)
            .map(|k| dz[2 * hdim + k] + dzo[2 * hdim + k])
            .collect()
    }

    /// Runs the cell over a whole sequence from a zero state.
    pub fn forward_seq(&self, xs: &[Vec<S>]) -> Result<(Vec<Vec<S>>, Vec<StepCache<S>>)> {
        if xs.is_empty() {
            return Err(Error::shape("empty sequence"));
        }
        let mut state = CellState::zeros(self.hidden);
        let mut hs = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let (next, cache) = self.step(x, &state)?;
            hs.push(next.h.clone());
            caches.push(cache);
            state = next;
        }
        Ok((hs, caches))
    }

    /// Backpropagation through time; returns `∂L/∂x_t` for every step.
    pub fn backward_seq(&mut self, caches: &[StepCache<S>], dhs: &[Vec<S>]) -> Vec<Vec<S>> {
        debug_assert_eq!(caches.len(), dhs.len());
        let mut carry = StateGrad::zeros(self.hidden);
        let mut dxs = vec![Vec::new(); caches.len()];
        for t in (0..caches.len()).rev() {
            dxs[t] = self.step_backward(&caches[t], &dhs[t], &mut carry);
        }
        dxs
    }
}

fn add_into<S: Scalar>(acc: &mut [S], v: &[S]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += *b;
    }
}

impl<S: Scalar> ParamSet<S> for LstmParams<S> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<S>)) {
        for p in [&self.w_i, &self.w_f, &self.w_o, &self.w_d, &self.b_i, &self.b_f, &self.b_o, &self.b_d] {
            f(p);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<S>)) {
        for p in [
            &mut self.w_i,
            &mut self.w_f,
            &mut self.w_o,
            &mut self.w_d,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_o,
            &mut self.b_d,
        ] {
            f(p);
        }
    }
}

/// Single LSTM step as a free function.
pub fn lstm_cell<S: Scalar>(x: &[S], h_prev: &[S], c_prev: &[S], params: &LstmParams<S>) -> Result<(Vec<S>, Vec<S>)> {
    let state = CellState {
        h: h_prev.to_vec(),
        c: c_prev.to_vec(),
        d: vec![S::zero(); h_prev.len()],
    };
    let (next, _) = params.step(x, &state)?;
    Ok((next.h, next.c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(input: usize, hidden: usize, seed: u64) -> LstmParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = LstmParams::new("l", input, hidden, CellConfig::default(), &mut rng);
        // larger weights than init so the oracle comparison is not trivially near zero
        p.visit_mut(&mut |q| q.value.data_mut().iter_mut().for_each(|v| *v *= 8.0));
        for b in [&mut p.b_i, &mut p.b_f, &mut p.b_o, &mut p.b_d] {
            b.value.data_mut().iter_mut().enumerate().for_each(|(k, v)| *v = 0.1 * k as f64 - 0.15);
        }
        p
    }

    #[test]
    fn zero_weights_give_zero_hidden_with_tanh_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = CellConfig { candidate: Activation::Tanh, ..Default::default() };
        let mut p = LstmParams::<f64>::new("l", 3, 4, cell, &mut rng);
        p.visit_mut(&mut |q| q.value.fill(0.0));
        let (h, c) = lstm_cell(&[0.3, -1.0, 2.0], &[0.0; 4], &[0.0; 4], &p).unwrap();
        assert!(c.iter().chain(&h).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weights_with_sigmoid_candidate() {
        // d = σ(0) = 0.5 keeps the cell from staying at zero: c = 0.25.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = LstmParams::<f64>::new("l", 3, 4, CellConfig::default(), &mut rng);
        p.visit_mut(&mut |q| q.value.fill(0.0));
        let (h, c) = lstm_cell(&[0.3, -1.0, 2.0], &[0.0; 4], &[0.0; 4], &p).unwrap();
        assert!(c.iter().all(|&v| v == 0.25));
        assert!(h.iter().all(|&v| (v - 0.5 * 0.25f64.tanh()).abs() < 1e-15));
    }

    #[test]
    fn saturated_forget_gate_drops_previous_cell() {
        let mut p = params(3, 4, 1);
        p.w_f.value.fill(0.0);
        p.b_f.value.fill(-1e3);
        let x = [0.2, 0.4, -0.6];
        let c_prev = [0.9, -0.3, 0.5, 0.1];
        let (_, c) = lstm_cell(&x, &[0.1; 4], &c_prev, &p).unwrap();
        let state = CellState { h: vec![0.1; 4], c: c_prev.to_vec(), d: vec![0.0; 4] };
        let (_, cache) = p.step(&x, &state).unwrap();
        for k in 0..4 {
            assert!((c[k] - cache.i[k] * cache.d[k]).abs() < 1e-15);
        }
    }

    /// Direct transcription of the cell equations, independent of `step`.
    fn reference_step(p: &LstmParams<f64>, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = h.len();
        let width = 2 * hd + x.len();
        let row = |w: &Parameter<f64>, r: usize, v: &[f64]| (0..width).map(|k| w.value.get(r, k) * v[k]).sum::<f64>();
        let z: Vec<f64> = c.iter().chain(h).chain(x).copied().collect();
        let mut c_new = vec![0.0; hd];
        for r in 0..hd {
            let i = sigmoid(row(&p.w_i, r, &z) + p.b_i.value.data()[r]);
            let f = sigmoid(row(&p.w_f, r, &z) + p.b_f.value.data()[r]);
            let d = sigmoid(row(&p.w_d, r, &z) + p.b_d.value.data()[r]);
            c_new[r] = i * d + f * c[r];
        }
        let zo: Vec<f64> = c_new.iter().chain(h).chain(x).copied().collect();
        let h_new = (0..hd)
            .map(|r| sigmoid(row(&p.w_o, r, &zo) + p.b_o.value.data()[r]) * c_new[r].tanh())
            .collect();
        (h_new, c_new)
    }

    #[test]
    fn matches_reference_transcription() {
        let p = params(4, 4, 7);
        let x = [0.5, -0.25, 1.5, -2.0];
        let h = [0.1, -0.2, 0.3, 0.05];
        let c = [0.7, -0.4, 0.0, 1.2];
        let (h1, c1) = lstm_cell(&x, &h, &c, &p).unwrap();
        let (h2, c2) = reference_step(&p, &x, &h, &c);
        for k in 0..4 {
            assert!((h1[k] - h2[k]).abs() < 1e-14);
            assert!((c1[k] - c2[k]).abs() < 1e-14);
        }
        assert!(h1.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn shape_errors() {
        let p = params(3, 2, 0);
        assert!(matches!(lstm_cell(&[1.0; 2], &[0.0; 2], &[0.0; 2], &p), Err(Error::Shape(_))));
        assert!(matches!(lstm_cell(&[1.0; 3], &[0.0; 3], &[0.0; 2], &p), Err(Error::Shape(_))));
        assert!(p.forward_seq(&[]).is_err());
    }
}
