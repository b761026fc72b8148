//! Parameter manifest: `(name, shape, row-major values)` per parameter plus a
//! format version. Values are written as shortest round-trip decimals, so a
//! save/load cycle is bit-exact for f64.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::param::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: String,
    #[serde(default)]
    pub metadata: serde_json::Value,
    pub parameters: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn capture<S: Scalar>(
        kind: impl Into<String>,
        metadata: serde_json::Value,
        params: &(impl ParamSet<S> + ?Sized),
    ) -> Self {
        let mut parameters = Vec::new();
        params.visit(&mut |p| {
            parameters.push(ParamRecord {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                values: p.value.data().iter().map(|v| v.as_f64()).collect(),
            })
        });
        Self {
            format_version: FORMAT_VERSION,
            kind: kind.into(),
            metadata,
            parameters,
        }
    }

    /// Copies stored values into `params`; names and shapes must match exactly.
    pub fn restore<S: Scalar>(&self, params: &mut (impl ParamSet<S> + ?Sized)) -> Result<()> {
        let mut idx = 0;
        let mut err = None;
        params.visit_mut(&mut |p| {
            if err.is_some() {
                return;
            }
            let Some(rec) = self.parameters.get(idx) else {
                err = Some(Error::Checkpoint(format!("checkpoint has no entry for {}", p.name)));
                return;
            };
            idx += 1;
            if rec.name != p.name || rec.shape != p.value.shape() {
                err = Some(Error::Checkpoint(format!(
                    "incompatible checkpoint: expected {} {:?}, found {} {:?}",
                    p.name,
                    p.value.shape(),
                    rec.name,
                    rec.shape
                )));
                return;
            }
            let data = rec.values.iter().map(|&v| S::lit(v)).collect();
            match Tensor::new(rec.shape.clone(), data) {
                Ok(t) => {
                    p.value = t;
                    p.zero_grad();
                }
                Err(e) => err = Some(Error::Checkpoint(format!("{}: {e}", rec.name))),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if idx != self.parameters.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} parameters, model has {idx}",
                self.parameters.len()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)
            .map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if ck.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                ck.format_version
            )));
        }
        for rec in &ck.parameters {
            let expected: usize = rec.shape.iter().product();
            if expected != rec.values.len() {
                return Err(Error::Checkpoint(format!(
                    "{}: shape {:?} but {} values",
                    rec.name,
                    rec.shape,
                    rec.values.len()
                )));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
