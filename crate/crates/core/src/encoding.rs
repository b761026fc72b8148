//! One-hot and ρ-hot categorical encoding.
//!
//! A ρ-hot vector for category `k` of `K` with duplication `n` has length
//! `K·n`; the contiguous block `[k·n, (k+1)·n)` holds the learnable scale ρ
//! and every other entry is zero.

use crate::error::{Error, Result};
use crate::numerics::{Parameter, Tensor};
use crate::scalar::Scalar;

pub const DEFAULT_RHO: f64 = 0.5;

pub fn one_hot<S: Scalar>(k: usize, count: usize) -> Result<Tensor<S>> {
    if k >= count {
        return Err(Error::Index { index: k, count });
    }
    let mut v = vec![S::zero(); count];
    v[k] = S::one();
    Tensor::vector(v)
}

/// A categorical vocabulary of `count` classes with duplication `n` and a
/// learnable scale ρ.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoHotFamily<S> {
    count: usize,
    n: usize,
    pub rho: Parameter<S>,
}

impl<S: Scalar> RhoHotFamily<S> {
    pub fn new(name: impl Into<String>, count: usize, n: usize, rho: f64) -> Result<Self> {
        if count == 0 || n == 0 {
            return Err(Error::config(format!(
                "rho-hot family needs count >= 1 and n >= 1, got count={count}, n={n}"
            )));
        }
        Ok(Self {
            count,
            n,
            rho: Parameter::new(name, Tensor::scalar(S::lit(rho))?),
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn duplication(&self) -> usize {
        self.n
    }

    /// Encoded width `K·n`.
    pub fn width(&self) -> usize {
        self.count * self.n
    }

    pub fn rho(&self) -> S {
        self.rho.value.data()[0]
    }

    pub fn set_rho(&mut self, rho: S) {
        self.rho.value.data_mut()[0] = rho;
    }

    fn check(&self, k: usize) -> Result<()> {
        if k >= self.count {
            Err(Error::Index {
                index: k,
                count: self.count,
            })
        } else {
            Ok(())
        }
    }

    pub fn encode(&self, k: usize) -> Result<Tensor<S>> {
        self.check(k)?;
        let mut v = vec![S::zero(); self.width()];
        self.write_into(Some(k), &mut v);
        Tensor::vector(v)
    }

    /// Writes the encoding of `k` (or the all-zero absent vector for `None`)
    /// into `out`, which must be `width()` long.
    pub fn write_into(&self, k: Option<usize>, out: &mut [S]) {
        debug_assert_eq!(out.len(), self.width());
        out.iter_mut().for_each(|v| *v = S::zero());
        if let Some(k) = k {
            debug_assert!(k < self.count);
            let rho = self.rho();
            out[k * self.n..(k + 1) * self.n].iter_mut().for_each(|v| *v = rho);
        }
    }

    /// Accumulates `∂L/∂ρ` given the upstream gradient `d` of an encoded
    /// vector: `∂ν/∂ρ = ν₁ ⊗ 1`, so only the active block contributes.
    pub fn accumulate_grad(&mut self, k: Option<usize>, d: &[S]) {
        debug_assert_eq!(d.len(), self.width());
        if let Some(k) = k {
            let g: S = d[k * self.n..(k + 1) * self.n].iter().copied().sum();
            self.rho.grad.data_mut()[0] += g;
        }
    }
}
