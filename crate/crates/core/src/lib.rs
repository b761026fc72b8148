//! Lexicon-augmented two-level bi-LSTM sentiment classification with ρ-hot
//! lexicon embeddings, plus a lexicon-rule baseline.
//!
//! The numeric core is generic over [`Scalar`], implemented for `f32` and `f64`.
//! The CLI trains and evaluates in `f64`.

pub mod baseline;
pub mod cli;
pub mod corpus;
pub mod encoding;
pub mod error;
pub mod lexicon;
pub mod network;
pub mod numerics;
pub mod recurrent;
pub mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;
