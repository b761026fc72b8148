use serde::{Deserialize, Serialize};

use super::param::ParamSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgd,
    Adam,
}

#[derive(Debug, Clone)]
struct Moments<S> {
    name: String,
    first: Vec<S>,
    second: Vec<S>,
}

/// Optimizer state: algorithm, learning rate and per-parameter moments.
#[derive(Debug, Clone)]
pub struct Optimizer<S> {
    algorithm: Algorithm,
    lr: S,
    beta1: S,
    beta2: S,
    eps: S,
    step: u64,
    moments: Vec<Moments<S>>,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(algorithm: Algorithm, lr: f64) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::config(format!("learning rate must be > 0, got {lr}")));
        }
        Ok(Self {
            algorithm,
            lr: S::lit(lr),
            beta1: S::lit(0.9),
            beta2: S::lit(0.999),
            eps: S::lit(1e-8),
            step: 0,
            moments: Vec::new(),
        })
    }

    pub fn sgd(lr: f64) -> Result<Self> {
        Self::new(Algorithm::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Result<Self> {
        Self::new(Algorithm::Adam, lr)
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    ///
    /// Parameters whose gradient is exactly zero are left untouched, moments
    /// included.
    pub fn step(&mut self, params: &mut dyn ParamSet<S>) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let algorithm = self.algorithm;
        let bias1 = S::one() - b1.powi(t);
        let bias2 = S::one() - b2.powi(t);
        let moments = &mut self.moments;
        let mut index = 0usize;
        let mut err = None;

        params.visit_mut(&mut |p| {
            if err.is_some() {
                return;
            }
            if algorithm == Algorithm::Adam {
                if moments.len() <= index {
                    moments.push(Moments {
                        name: p.name.clone(),
                        first: vec![S::zero(); p.len()],
                        second: vec![S::zero(); p.len()],
                    });
                }
                let m = &moments[index];
                if m.name != p.name || m.first.len() != p.len() {
                    err = Some(Error::shape(format!(
                        "optimizer moments for {} do not match parameter {}",
                        m.name, p.name
                    )));
                    return;
                }
            }
            let slot = index;
            index += 1;
            if p.grad.is_all_zero() {
                return;
            }
            match algorithm {
                Algorithm::Sgd => {
                    for (v, &g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                        *v -= lr * g;
                    }
                }
                Algorithm::Adam => {
                    let m = &mut moments[slot];
                    let grad = p.grad.data();
                    let value = p.value.data_mut();
                    for k in 0..grad.len() {
                        let g = grad[k];
                        m.first[k] = b1 * m.first[k] + (S::one() - b1) * g;
                        m.second[k] = b2 * m.second[k] + (S::one() - b2) * g * g;
                        let m_hat = m.first[k] / bias1;
                        let v_hat = m.second[k] / bias2;
                        value[k] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            p.zero_grad();
        });
        if let Some(e) = err {
            return Err(e);
        }
        params.zero_grads();
        params.check_finite()
    }
}
