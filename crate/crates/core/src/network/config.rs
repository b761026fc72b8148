use serde::{Deserialize, Serialize};

use crate::corpus::{TokenMode, View};
use crate::encoding::DEFAULT_RHO;
use crate::error::{Error, Result};
use crate::numerics::{Activation, Algorithm};
use crate::recurrent::{CellConfig, CellRecurrence};

/// How the level-1 network turns bi-LSTM states into a clause vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    Sum,
    /// Attention scored from hidden states only.
    Plain,
    /// Attention scored from hidden states and key-word embeddings.
    Lex,
    /// Attention scored from hidden states, key-word and POS embeddings.
    #[default]
    LexPos,
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Self::Sum),
            "plain" => Ok(Self::Plain),
            "lex" => Ok(Self::Lex),
            "lex-pos" => Ok(Self::LexPos),
            other => Err(Error::config(format!("unknown pooling '{other}' (sum|plain|lex|lex-pos)"))),
        }
    }
}

/// Every model and training knob. Missing fields in a config file take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub mode: TokenMode,
    pub view: View,
    pub test_fraction: f64,

    pub embed_dim: usize,
    /// Duplication factor of the key-word and POS families.
    pub n: usize,
    pub rho: f64,
    pub hidden1: usize,
    pub hidden2: usize,
    pub pooling: Pooling,
    pub tanh_candidate: bool,
    pub previous_candidate_cell: bool,

    pub keyword_embedding: bool,
    /// When false, positive and negative words are treated as `other`.
    pub polar_embedding: bool,
    pub pos_embedding: bool,
    pub conjunction_embedding: bool,
    /// Feed conjunction embeddings to the level-2 input as well as its
    /// attention scores.
    pub conjunction_in_input: bool,
    /// Pass the level-1 output to level 2 as one expected score instead of
    /// three probabilities.
    pub collapse_y: bool,

    pub optimizer: Algorithm,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs1: usize,
    pub epochs2: usize,
    /// Stop a level early once its training accuracy reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: TokenMode::Word,
            view: View::Clauses,
            test_fraction: 0.2,
            embed_dim: 200,
            n: 11,
            rho: DEFAULT_RHO,
            hidden1: 128,
            hidden2: 64,
            pooling: Pooling::LexPos,
            tanh_candidate: false,
            previous_candidate_cell: false,
            keyword_embedding: true,
            polar_embedding: true,
            pos_embedding: true,
            conjunction_embedding: true,
            conjunction_in_input: true,
            collapse_y: false,
            optimizer: Algorithm::Adam,
            lr: 1e-3,
            batch_size: 32,
            epochs1: 50,
            epochs2: 50,
            stop_at_train_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("n", self.n),
            ("hidden1", self.hidden1),
            ("hidden2", self.hidden2),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::config(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        if !self.rho.is_finite() {
            return Err(Error::config("rho must be finite"));
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return Err(Error::config(format!("test_fraction {} outside [0, 1]", self.test_fraction)));
        }
        if let Some(a) = self.stop_at_train_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::config(format!("stop_at_train_accuracy {a} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn cell(&self) -> CellConfig {
        CellConfig {
            candidate: if self.tanh_candidate {
                Activation::Tanh
            } else {
                Activation::Sigmoid
            },
            recurrence: if self.previous_candidate_cell {
                CellRecurrence::PreviousCandidate
            } else {
                CellRecurrence::Standard
            },
        }
    }

    /// Width of `y⁽¹⁾` as seen by level 2.
    pub fn y_dim(&self) -> usize {
        if self.collapse_y {
            1
        } else {
            3
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(format!("config file: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let d = TrainConfig::default();
        d.validate().unwrap();
        let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        assert_eq!(d.cell(), CellConfig::default());
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let c = TrainConfig::from_toml("embed_dim = 16\npooling = \"sum\"\nmode = \"char\"\n").unwrap();
        assert_eq!(c.embed_dim, 16);
        assert_eq!(c.pooling, Pooling::Sum);
        assert_eq!(c.mode, TokenMode::Char);
        assert_eq!(c.hidden1, 128);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TrainConfig::from_toml("hidden1 = 0").is_err());
        assert!(TrainConfig::from_toml("lr = -1.0").is_err());
        assert!(TrainConfig::from_toml("bogus = 1").is_err());
    }
}
