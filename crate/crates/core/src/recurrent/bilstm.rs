use rand::Rng;

use super::lstm::{CellConfig, LstmParams, StepCache};
use crate::error::Result;
use crate::numerics::{ParamSet, Parameter};
use crate::scalar::Scalar;

/// Per-position forward and backward hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmOutput<S> {
    /// `→h_t`, position-aligned.
    pub forward: Vec<Vec<S>>,
    /// `←h_t`, position-aligned (computed right to left).
    pub backward: Vec<Vec<S>>,
}

impl<S: Scalar> BiLstmOutput<S> {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// `h_t = [→h_t, ←h_t]` for every position.
    pub fn concatenated(&self) -> Vec<Vec<S>> {
        self.forward
            .iter()
            .zip(&self.backward)
            .map(|(f, b)| f.iter().chain(b).copied().collect())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct BiLstmCache<S> {
    fwd: Vec<StepCache<S>>,
    bwd: Vec<StepCache<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm<S> {
    pub fwd: LstmParams<S>,
    pub bwd: LstmParams<S>,
}

impl<S: Scalar> BiLstm<S> {
    pub fn new<R: Rng>(prefix: &str, input_dim: usize, hidden: usize, cell: CellConfig, rng: &mut R) -> Self {
        Self {
            fwd: LstmParams::new(&format!("{prefix}.fwd"), input_dim, hidden, cell, rng),
            bwd: LstmParams::new(&format!("{prefix}.bwd"), input_dim, hidden, cell, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    /// Concatenated output width, `2·hidden`.
    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden()
    }

    pub fn forward(&self, xs: &[Vec<S>]) -> Result<(BiLstmOutput<S>, BiLstmCache<S>)> {
        let (forward, fwd) = self.fwd.forward_seq(xs)?;
        let reversed: Vec<Vec<S>> = xs.iter().rev().cloned().collect();
        let (mut backward, bwd) = self.bwd.forward_seq(&reversed)?;
        backward.reverse();
        Ok((BiLstmOutput { forward, backward }, BiLstmCache { fwd, bwd }))
    }

    /// Backward pass given `∂L/∂h_t` for the concatenated states; returns
    /// `∂L/∂x_t`.
    pub fn backward(&mut self, cache: &BiLstmCache<S>, dh: &[Vec<S>]) -> Vec<Vec<S>> {
        let hd = self.hidden();
        let d_fwd: Vec<Vec<S>> = dh.iter().map(|d| d[..hd].to_vec()).collect();
        let d_bwd: Vec<Vec<S>> = dh.iter().rev().map(|d| d[hd..].to_vec()).collect();
        let dx_f = self.fwd.backward_seq(&cache.fwd, &d_fwd);
        let dx_b = self.bwd.backward_seq(&cache.bwd, &d_bwd);
        dx_f.into_iter()
            .zip(dx_b.into_iter().rev())
            .map(|(a, b)| a.iter().zip(&b).map(|(x, y)| *x + *y).collect())
            .collect()
    }
}

impl<S: Scalar> ParamSet<S> for BiLstm<S> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<S>)) {
        self.fwd.visit(f);
        self.bwd.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<S>)) {
        self.fwd.visit_mut(f);
        self.bwd.visit_mut(f);
    }
}

/// Runs a forward and a backward LSTM over `xs`.
pub fn bilstm<S: Scalar>(xs: &[Vec<S>], fwd: &LstmParams<S>, bwd: &LstmParams<S>) -> Result<BiLstmOutput<S>> {
    let net = BiLstm {
        fwd: fwd.clone(),
        bwd: bwd.clone(),
    };
    Ok(net.forward(xs)?.0)
}
