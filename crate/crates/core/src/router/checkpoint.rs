//! JSON checkpoints: `{version, dims, seed, embedder, tensors}` where each
//! tensor is a flat row-major array named as in [`RouterParams::tensors`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::params::{RouterDims, RouterParams};
use crate::embedding::EmbedderConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u64,
    pub dims: RouterDims,
    pub seed: u64,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    pub tensors: BTreeMap<String, Vec<f64>>,
}

impl Checkpoint {
    pub fn from_params(params: &RouterParams) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            dims: params.dims,
            seed: params.seed,
            embedder: params.embedder.clone(),
            tensors: params
                .tensors()
                .into_iter()
                .map(|(name, t)| (name, t.to_vec()))
                .collect(),
        }
    }

    pub fn into_params(self) -> Result<RouterParams> {
        let mut params = RouterParams::zeros(self.dims);
        params.seed = self.seed;
        params.embedder = self.embedder;
        let mut tensors = self.tensors;
        for (name, slot) in params.tensors_mut() {
            let values = tensors
                .remove(&name)
                .ok_or_else(|| Error::CorruptCheckpoint(format!("missing tensor `{name}`")))?;
            if values.len() != slot.len() {
                return Err(Error::CorruptCheckpoint(format!(
                    "tensor `{name}` has {} values, expected {}",
                    values.len(),
                    slot.len()
                )));
            }
            *slot = values;
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::CorruptCheckpoint(format!("unexpected tensor `{extra}`")));
        }
        if !params.is_finite() {
            return Err(Error::CorruptCheckpoint("non-finite tensor value".into()));
        }
        params
            .check()
            .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        Ok(params)
    }
}

pub fn checkpoint_to_string(params: &RouterParams) -> String {
    serde_json::to_string(&Checkpoint::from_params(params)).expect("checkpoint serializes")
}

pub fn checkpoint_from_str(text: &str) -> Result<RouterParams> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::CorruptCheckpoint("missing `version`".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let ckpt: Checkpoint =
        serde_json::from_value(value).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    ckpt.into_params()
}

pub fn save_checkpoint(params: &RouterParams, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<RouterParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}
