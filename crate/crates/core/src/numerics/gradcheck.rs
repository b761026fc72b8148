//! Central finite-difference gradient oracle.
//!
//! The oracle only ever evaluates the loss; it never touches any backward
//! pass, so it can check one.

use super::param::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Denominator floor for relative errors so that entries whose true gradient
/// is zero are judged on absolute error at this scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Estimates `∂loss/∂θ` for every scalar parameter by
/// `(L(θ+ε) − L(θ−ε)) / 2ε`.
///
/// Parameter values are restored exactly after each probe.
pub fn finite_diff_grad<S, M, F>(model: &mut M, mut loss: F, eps: f64) -> Result<Vec<(String, Tensor<S>)>>
where
    S: Scalar,
    M: ParamSet<S> + ?Sized,
    F: FnMut(&M) -> Result<S>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Oracle(format!("epsilon {eps} outside [1e-7, 1e-3]")));
    }
    let base = loss(model)?;
    let again = loss(model)?;
    if base != again {
        return Err(Error::Oracle(format!(
            "loss is not deterministic: {base} then {again}"
        )));
    }

    let mut layout = Vec::new();
    model.visit(&mut |p| layout.push((p.name.clone(), p.value.shape().to_vec())));

    let eps_s = S::lit(eps);
    let two_eps = S::lit(2.0 * eps);
    let mut out = Vec::with_capacity(layout.len());
    for (pi, (name, shape)) in layout.into_iter().enumerate() {
        let mut grad = Tensor::zeros(&shape);
        for k in 0..grad.len() {
            let original = read(model, pi, k);
            write(model, pi, k, original + eps_s);
            let plus = loss(model);
            write(model, pi, k, original - eps_s);
            let minus = loss(model);
            write(model, pi, k, original);
            let (plus, minus) = (plus?, minus?);
            grad.data_mut()[k] = (plus - minus) / two_eps;
        }
        out.push((name, grad));
    }
    if loss(model)? != base {
        return Err(Error::Oracle("loss changed after restoring parameters".into()));
    }
    Ok(out)
}

fn read<S: Scalar, M: ParamSet<S> + ?Sized>(model: &M, pi: usize, k: usize) -> S {
    let mut idx = 0;
    let mut v = S::zero();
    model.visit(&mut |p| {
        if idx == pi {
            v = p.value.data()[k];
        }
        idx += 1;
    });
    v
}

fn write<S: Scalar, M: ParamSet<S> + ?Sized>(model: &mut M, pi: usize, k: usize, v: S) {
    let mut idx = 0;
    model.visit_mut(&mut |p| {
        if idx == pi {
            p.value.data_mut()[k] = v;
        }
        idx += 1;
    });
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Worst relative error for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradDiff {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares analytic gradients against oracle estimates, parameter by
/// parameter (matched by name).
pub fn compare_grads<S: Scalar>(
    analytic: &[(String, Tensor<S>)],
    numeric: &[(String, Tensor<S>)],
) -> Result<Vec<GradDiff>> {
    if analytic.len() != numeric.len() {
        return Err(Error::Oracle(format!(
            "{} analytic gradients vs {} numeric",
            analytic.len(),
            numeric.len()
        )));
    }
    analytic
        .iter()
        .zip(numeric)
        .map(|((an, a), (nn, n))| {
            if an != nn || a.shape() != n.shape() {
                return Err(Error::Oracle(format!("gradient mismatch between {an} and {nn}")));
            }
            let mut diff = GradDiff {
                name: an.clone(),
                max_rel_error: 0.0,
                worst_index: 0,
                analytic: 0.0,
                numeric: 0.0,
            };
            for (k, (x, y)) in a.data().iter().zip(n.data()).enumerate() {
                let e = rel_error(x.as_f64(), y.as_f64());
                if e > diff.max_rel_error || k == 0 {
                    diff.max_rel_error = e;
                    diff.worst_index = k;
                    diff.analytic = x.as_f64();
                    diff.numeric = y.as_f64();
                }
            }
            Ok(diff)
        })
        .collect()
}
