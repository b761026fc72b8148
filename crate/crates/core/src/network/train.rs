//! Minibatch training shared by both levels.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ops::argmax;
use crate::numerics::{Algorithm, Optimizer, ParamSet};
use crate::scalar::Scalar;

/// A model that can score one example and accumulate its loss gradient.
pub trait Classifier<S: Scalar>: ParamSet<S> {
    type Input;

    /// Class probabilities for `input`.
    fn probabilities(&self, input: &Self::Input) -> Result<Vec<S>>;

    /// Cross-entropy loss of `input` against `label`, accumulating
    /// `∂loss/∂θ` into the parameter gradients. Also returns the
    /// probabilities.
    fn loss_and_grad(&mut self, input: &Self::Input, label: usize) -> Result<(S, Vec<S>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Algorithm,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss over the epoch's pass, each example scored before its
    /// batch update.
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Cross-entropy `−log p[label]`, with the probability floored at the
/// smallest positive normal to keep the loss finite.
pub fn cross_entropy<S: Scalar>(probs: &[S], label: usize) -> S {
    -probs[label].max(S::min_positive_value()).ln()
}

/// Trains `model` by minibatch descent on the mean cross-entropy. Examples
/// are reshuffled each epoch from a seeded generator. A learning rate of
/// zero runs the passes without updating anything. `on_epoch` sees the
/// model after every epoch and may stop training.
pub fn fit<S, M, F>(model: &mut M, data: &[(M::Input, usize)], cfg: &FitConfig, mut on_epoch: F) -> Result<Vec<EpochStats>>
where
    S: Scalar,
    M: Classifier<S>,
    F: FnMut(&M, &EpochStats) -> Result<Control>,
{
    if data.is_empty() {
        return Err(Error::EmptyDataset("no training examples".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let mut optimizer = if cfg.lr > 0.0 {
        Some(Optimizer::<S>::new(cfg.optimizer, cfg.lr)?)
    } else if cfg.lr == 0.0 {
        None
    } else {
        return Err(Error::config(format!("learning rate {} must be >= 0", cfg.lr)));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    model.zero_grads();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            for &i in batch {
                let (input, label) = &data[i];
                let (loss, probs) = model.loss_and_grad(input, *label)?;
                let loss = loss.as_f64();
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch, loss });
                }
                total += loss;
                correct += usize::from(argmax(&probs) == *label);
            }
            let scale = S::one() / S::lit(batch.len() as f64);
            match optimizer.as_mut() {
                Some(opt) => {
                    model.visit_mut(&mut |p| p.grad.data_mut().iter_mut().for_each(|g| *g *= scale));
                    opt.step(model).map_err(|e| match e {
                        Error::NumericDomain(_) => Error::Divergence { epoch, loss: f64::NAN },
                        other => other,
                    })?;
                }
                None => model.zero_grads(),
            }
        }
        let stats = EpochStats {
            epoch,
            loss: total / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        };
        history.push(stats);
        if on_epoch(model, &stats)? == Control::Stop {
            break;
        }
    }
    Ok(history)
}

/// Mean loss and accuracy without touching gradients.
pub fn evaluate<S, M>(model: &M, data: &[(M::Input, usize)]) -> Result<(f64, f64)>
where
    S: Scalar,
    M: Classifier<S>,
{
    if data.is_empty() {
        return Err(Error::EmptyDataset("no evaluation examples".into()));
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    for (input, label) in data {
        let probs = model.probabilities(input)?;
        total += cross_entropy(&probs, *label).as_f64();
        correct += usize::from(argmax(&probs) == *label);
    }
    Ok((total / data.len() as f64, correct as f64 / data.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ops::softmax_slice;
    use crate::numerics::{Parameter, Tensor};

    /// Softmax regression on a one-hot input: logits are a row of `w`.
    struct Table {
        w: Parameter<f64>,
    }

    impl ParamSet<f64> for Table {
        fn visit(&self, f: &mut dyn FnMut(&Parameter<f64>)) {
            f(&self.w)
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<f64>)) {
            f(&mut self.w)
        }
    }

    impl Classifier<f64> for Table {
        type Input = usize;

        fn probabilities(&self, x: &usize) -> Result<Vec<f64>> {
            softmax_slice(self.w.value.row(*x))
        }

        fn loss_and_grad(&mut self, x: &usize, label: usize) -> Result<(f64, Vec<f64>)> {
            let p = self.probabilities(x)?;
            let row = self.w.grad.row_mut(*x);
            for k in 0..3 {
                row[k] += p[k] - if k == label { 1.0 } else { 0.0 };
            }
            Ok((cross_entropy(&p, label), p))
        }
    }

    fn table() -> Table {
        Table {
            w: Parameter::new("w", Tensor::zeros(&[3, 3])),
        }
    }

    fn data() -> Vec<(usize, usize)> {
        vec![(0, 2), (1, 0), (2, 1)]
    }

    fn cfg(lr: f64) -> FitConfig {
        FitConfig {
            seed: 1,
            epochs: 200,
            batch_size: 2,
            optimizer: Algorithm::Adam,
            lr,
        }
    }

    #[test]
    fn loss_decreases_and_fits() {
        let mut m = table();
        let h = fit(&mut m, &data(), &cfg(0.05), |_, _| Ok(Control::Continue)).unwrap();
        assert!(h.last().unwrap().loss < h[0].loss);
        assert_eq!(evaluate(&m, &data()).unwrap().1, 1.0);
    }

    #[test]
    fn zero_lr_changes_nothing() {
        let mut m = table();
        m.w.value.data_mut()[4] = 0.3;
        let before = m.values();
        fit(&mut m, &data(), &cfg(0.0), |_, _| Ok(Control::Continue)).unwrap();
        assert_eq!(m.values(), before);
    }

    #[test]
    fn seeded_history_is_bit_identical() {
        let run = || {
            let mut m = table();
            fit(&mut m, &data(), &cfg(0.01), |_, _| Ok(Control::Continue)).unwrap()
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.loss.to_bits() == y.loss.to_bits()));
    }

    #[test]
    fn callback_can_stop() {
        let mut m = table();
        let h = fit(&mut m, &data(), &cfg(0.05), |_, s| {
            Ok(if s.epoch == 3 { Control::Stop } else { Control::Continue })
        })
        .unwrap();
        assert_eq!(h.len(), 3);
    }

    struct Exploding;

    impl ParamSet<f64> for Exploding {
        fn visit(&self, _: &mut dyn FnMut(&Parameter<f64>)) {}
        fn visit_mut(&mut self, _: &mut dyn FnMut(&mut Parameter<f64>)) {}
    }

    impl Classifier<f64> for Exploding {
        type Input = ();
        fn probabilities(&self, _: &()) -> Result<Vec<f64>> {
            Ok(vec![1.0 / 3.0; 3])
        }
        fn loss_and_grad(&mut self, _: &(), _: usize) -> Result<(f64, Vec<f64>)> {
            Ok((f64::NAN, vec![1.0 / 3.0; 3]))
        }
    }

    #[test]
    fn nan_loss_is_divergence_with_epoch() {
        let err = fit(&mut Exploding, &[((), 0)], &cfg(0.1), |_, _| Ok(Control::Continue)).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1, .. }));
        assert_eq!(err.exit_code(), 2);
    }
}
