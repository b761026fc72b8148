use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A named trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<S> {
    pub name: String,
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
}

impl<S: Scalar> Parameter<S> {
    pub fn new(name: impl Into<String>, value: Tensor<S>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::new(name, Tensor::zeros(shape))
    }

    pub fn uniform<R: Rng>(name: impl Into<String>, shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(-bound, bound);
        let value = Tensor::from_fn(shape, |_| S::lit(dist.sample(rng)));
        Self::new(name, value)
    }

    pub fn gaussian<R: Rng>(name: impl Into<String>, shape: &[usize], std: f64, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, std).expect("positive standard deviation");
        let value = Tensor::from_fn(shape, |_| S::lit(dist.sample(rng)));
        Self::new(name, value)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns parameters and can enumerate them in a fixed order.
pub trait ParamSet<S: Scalar> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<S>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<S>));

    fn zero_grads(&mut self) {
        self.visit_mut(&mut |p| p.zero_grad());
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(&mut |p| names.push(p.name.clone()));
        names
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.len());
        n
    }

    /// Snapshot of every parameter value, in visit order.
    fn values(&self) -> Vec<Tensor<S>> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push(p.value.clone()));
        out
    }

    fn grads(&self) -> Vec<(String, Tensor<S>)> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push((p.name.clone(), p.grad.clone())));
        out
    }

    /// Fails when two parameters share a name or a gradient shape drifted.
    fn validate_params(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let mut err = None;
        self.visit(&mut |p| {
            if err.is_some() {
                return;
            }
            if !seen.insert(p.name.clone()) {
                err = Some(Error::config(format!("duplicate parameter name {}", p.name)));
            } else if p.grad.shape() != p.value.shape() {
                err = Some(Error::shape(format!("gradient shape mismatch for {}", p.name)));
            }
        });
        err.map_or(Ok(()), Err)
    }

    fn check_finite(&self) -> Result<()> {
        let mut err = None;
        self.visit(&mut |p| {
            if err.is_none() {
                if let Err(e) = p.value.check_finite() {
                    err = Some(Error::NumericDomain(format!("parameter {}: {e}", p.name)));
                }
            }
        });
        err.map_or(Ok(()), Err)
    }
}

impl<S: Scalar> ParamSet<S> for Parameter<S> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<S>)) {
        f(self)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<S>)) {
        f(self)
    }
}

impl<S: Scalar> ParamSet<S> for Vec<Parameter<S>> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<S>)) {
        self.iter().for_each(f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<S>)) {
        self.iter_mut().for_each(f)
    }
}
