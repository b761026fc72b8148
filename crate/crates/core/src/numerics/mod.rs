//! Dense tensors, activations, parameters, optimizers, the finite-difference
//! gradient oracle and the checkpoint manifest.

pub mod checkpoint;
pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod param;
pub mod tensor;

pub use checkpoint::{Checkpoint, ParamRecord, FORMAT_VERSION};
pub use gradcheck::{compare_grads, finite_diff_grad, rel_error, GradDiff};
pub use ops::{activation, affine, sigmoid, softmax, softmax_slice, Activation};
pub use optim::{Algorithm, Optimizer};
pub use param::{ParamSet, Parameter};
pub use tensor::Tensor;
