//! Elementwise activations, softmax, affine maps and the slice kernels the
//! recurrent layers are built on.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output<S: Scalar>(self, y: S) -> S {
        match self {
            Activation::Sigmoid => y * (S::one() - y),
            Activation::Tanh => S::one() - y * y,
        }
    }
}

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    // Split by sign so exp never overflows.
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

pub fn activation<S: Scalar>(kind: Activation, x: &Tensor<S>) -> Result<Tensor<S>> {
    x.check_finite()?;
    Ok(x.map(|v| kind.apply(v)))
}

/// Numerically stable softmax over a slice.
pub fn softmax_slice<S: Scalar>(x: &[S]) -> Result<Vec<S>> {
    if x.is_empty() {
        return Err(Error::shape("softmax of an empty vector"));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::NumericDomain(format!("softmax input {v}")));
    }
    let max = x.iter().copied().fold(S::neg_infinity(), S::max);
    let mut out: Vec<S> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: S = out.iter().copied().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

pub fn softmax<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    if x.rank() != 1 {
        return Err(Error::shape(format!("softmax expects a vector, got {:?}", x.shape())));
    }
    Tensor::vector(softmax_slice(x.data())?)
}

/// `W x + b` for a `rows × cols` matrix `W`.
pub fn affine<S: Scalar>(w: &Tensor<S>, x: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    if w.rank() != 2 {
        return Err(Error::shape(format!("affine weight must be a matrix, got {:?}", w.shape())));
    }
    let (rows, cols) = (w.rows(), w.cols());
    if x.len() != cols {
        return Err(Error::shape(format!(
            "affine: weight is {rows}x{cols} but input has length {}",
            x.len()
        )));
    }
    if b.len() != rows {
        return Err(Error::shape(format!(
            "affine: weight has {rows} rows but bias has length {}",
            b.len()
        )));
    }
    let mut out = b.data().to_vec();
    matvec_acc(w.data(), cols, x.data(), &mut out);
    let t = Tensor::vector(out)?;
    Ok(t)
}

#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// `out += W x` where `W` is row-major with `cols` columns.
#[inline]
pub fn matvec_acc<S: Scalar>(w: &[S], cols: usize, x: &[S], out: &mut [S]) {
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(w.len(), cols * out.len());
    for (row, o) in w.chunks_exact(cols).zip(out.iter_mut()) {
        *o += dot(row, x);
    }
}

/// `out += Wᵀ v` where `W` is row-major with `cols` columns.
#[inline]
pub fn matvec_t_acc<S: Scalar>(w: &[S], cols: usize, v: &[S], out: &mut [S]) {
    debug_assert_eq!(out.len(), cols);
    debug_assert_eq!(w.len(), cols * v.len());
    for (row, &s) in w.chunks_exact(cols).zip(v) {
        if s.is_zero() {
            continue;
        }
        for (o, &r) in out.iter_mut().zip(row) {
            *o += s * r;
        }
    }
}

/// `G += a bᵀ` with `G` row-major, `a.len()` rows and `b.len()` columns.
#[inline]
pub fn outer_acc<S: Scalar>(g: &mut [S], a: &[S], b: &[S]) {
    debug_assert_eq!(g.len(), a.len() * b.len());
    for (row, &s) in g.chunks_exact_mut(b.len()).zip(a) {
        if s.is_zero() {
            continue;
        }
        for (o, &v) in row.iter_mut().zip(b) {
            *o += s * v;
        }
    }
}

#[inline]
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

pub fn argmax<S: Scalar>(x: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_and_tanh_at_zero() {
        let x = Tensor::vector(vec![0.0f64]).unwrap();
        assert_eq!(activation(Activation::Sigmoid, &x).unwrap().data(), &[0.5]);
        assert_eq!(activation(Activation::Tanh, &x).unwrap().data(), &[0.0]);
    }

    #[test]
    fn sigmoid_is_complementary() {
        for &x in &[-30.0f64, -2.5, -0.1, 0.3, 1.7, 12.0, 700.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15, "x={x}");
        }
    }

    #[test]
    fn activation_rejects_non_finite() {
        let mut x = Tensor::<f64>::zeros(&[2]);
        x.data_mut()[1] = f64::NAN;
        assert!(matches!(
            activation(Activation::Tanh, &x),
            Err(Error::NumericDomain(_))
        ));
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let u = softmax_slice(&[0.0f64, 0.0, 0.0]).unwrap();
        for v in &u {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax_slice(&[1000.0f64, 0.0]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert!(s[1] >= 0.0 && s[1] < 1e-300);
        assert!(softmax_slice::<f64>(&[]).is_err());
    }

    #[test]
    fn affine_identity_zero_and_hand_case() {
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = Tensor::vector(vec![0.7, -1.3]).unwrap();
        let zero_b = Tensor::<f64>::zeros(&[2]);
        assert_eq!(affine(&eye, &x, &zero_b).unwrap(), x);

        let zero_w = Tensor::<f64>::zeros(&[2, 2]);
        let b = Tensor::vector(vec![0.25, 4.0]).unwrap();
        assert_eq!(affine(&zero_w, &x, &b).unwrap(), b);

        // [[2, -1], [0.5, 3]] · [0.7, -1.3] + [0.25, 4]
        //   = [1.4 + 1.3 + 0.25, 0.35 - 3.9 + 4] = [2.95, 0.45]
        let w = Tensor::matrix(2, 2, vec![2.0, -1.0, 0.5, 3.0]).unwrap();
        let y = affine(&w, &x, &b).unwrap();
        assert!((y.data()[0] - 2.95).abs() < 1e-12);
        assert!((y.data()[1] - 0.45).abs() < 1e-12);
    }

    #[test]
    fn affine_dimension_mismatch() {
        let w = Tensor::<f64>::zeros(&[2, 3]);
        let x = Tensor::<f64>::zeros(&[2]);
        let b = Tensor::<f64>::zeros(&[2]);
        assert!(matches!(affine(&w, &x, &b), Err(Error::Shape(_))));
    }
}
