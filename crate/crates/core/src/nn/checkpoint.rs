use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NnError, ParamStore, Tensor};
use crate::container::{self, ContainerError};

pub const NNCK_MAGIC: &[u8; 4] = b"NNCK";

/// Checkpoint manifest: tensor names and shapes in payload order plus
/// free-form hyperparameters for the owning model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: String,
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    pub hyperparams: serde_json::Value,
    pub seed: u64,
    pub step: u64,
}

pub fn encode_checkpoint(store: &ParamStore, kind: &str, hyperparams: serde_json::Value, seed: u64) -> Result<Vec<u8>, NnError> {
    let manifest = Checkpoint {
        kind: kind.to_string(),
        names: store.names().to_vec(),
        shapes: store.ids().map(|id| store.get(id).shape().to_vec()).collect(),
        hyperparams,
        seed,
        step: store.step(),
    };
    let payload: Vec<f32> = store.flatten().into_iter().map(|v| v as f32).collect();
    Ok(container::encode(NNCK_MAGIC, &manifest, &payload)?)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ParamStore, Checkpoint), NnError> {
    let (manifest, payload): (Checkpoint, Vec<f32>) = container::decode(NNCK_MAGIC, bytes)?;
    if manifest.names.len() != manifest.shapes.len() {
        return Err(ContainerError::Header("names and shapes differ in length".into()).into());
    }
    let total: usize = manifest.shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    container::expect_len("checkpoint", payload.len(), total)?;
    let mut store = ParamStore::new();
    let mut off = 0;
    for (name, shape) in manifest.names.iter().zip(&manifest.shapes) {
        let n: usize = shape.iter().product();
        let data = payload[off..off + n].iter().map(|&v| v as f64).collect();
        store.add(name, Tensor::from_vec(shape, data)?)?;
        off += n;
    }
    store.step = manifest.step;
    Ok((store, manifest))
}

pub fn write_checkpoint(path: &Path, store: &ParamStore, kind: &str, hyperparams: serde_json::Value, seed: u64) -> Result<(), NnError> {
    let bytes = encode_checkpoint(store, kind, hyperparams, seed)?;
    std::fs::write(path, bytes).map_err(|source| ContainerError::Io { path: path.display().to_string(), source })?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(ParamStore, Checkpoint), NnError> {
    let bytes = std::fs::read(path).map_err(|source| ContainerError::Io { path: path.display().to_string(), source })?;
    decode_checkpoint(&bytes)
}
