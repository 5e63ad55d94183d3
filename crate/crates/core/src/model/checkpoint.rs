//! JSON checkpoints. Floats are written in shortest round-trip form, so a
//! save/load cycle reproduces every parameter bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelDims, ModelError, ModelParams, VariantKind};
use crate::autodiff::Tensor;
use crate::dataio::NormStats;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "dartnet-checkpoint";

/// Everything besides the weights needed to use a checkpoint on new data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seq_len: usize,
    pub stats: NormStats,
    pub epoch: usize,
    pub val_mse: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    config_hash: String,
    dims: ModelDims,
    variant: VariantKind,
    meta: CheckpointMeta,
    params: Vec<NamedTensor>,
}

fn config_hash(dims: &ModelDims, variant: VariantKind, seq_len: usize) -> String {
    let key = serde_json::json!({ "dims": dims, "variant": variant, "seq_len": seq_len });
    hex::encode(Sha256::digest(key.to_string().as_bytes()))
}

pub fn checkpoint_bytes(params: &ModelParams, meta: &CheckpointMeta) -> Vec<u8> {
    let container = Container {
        format: FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        config_hash: config_hash(params.dims(), params.variant(), meta.seq_len),
        dims: *params.dims(),
        variant: params.variant(),
        meta: meta.clone(),
        params: params
            .layout()
            .names()
            .iter()
            .zip(params.tensors())
            .map(|(name, t)| NamedTensor {
                name: name.clone(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec(&container).expect("checkpoint serializes");
    bytes.push(b'\n');
    bytes
}

fn io_err(path: &Path, source: std::io::Error) -> ModelError {
    ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the checkpoint and returns the SHA-256 of the written bytes.
pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams, meta: &CheckpointMeta) -> Result<String, ModelError> {
    let path = path.as_ref();
    let bytes = checkpoint_bytes(params, meta);
    std::fs::write(path, &bytes).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn file_sha256(path: impl AsRef<Path>) -> Result<String, ModelError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Loads a checkpoint, rejecting unknown formats, a stale config hash, and
/// any tensor whose name or shape disagrees with the declared dimensions.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams, CheckpointMeta), ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let c: Container = serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if c.format != FORMAT || c.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported format {} v{}", c.format, c.version)));
    }
    c.dims.validate()?;
    if c.config_hash != config_hash(&c.dims, c.variant, c.meta.seq_len) {
        return Err(ModelError::Checkpoint("config hash does not match dimensions".into()));
    }
    let expected = super::Layout::new(&c.dims, c.variant);
    if c.params.len() != expected.len() {
        return Err(ModelError::Checkpoint(format!(
            "expected {} tensors, found {}",
            expected.len(),
            c.params.len()
        )));
    }
    let mut tensors = Vec::with_capacity(c.params.len());
    for (t, name) in c.params.into_iter().zip(expected.names()) {
        if &t.name != name {
            return Err(ModelError::Checkpoint(format!("expected tensor {name}, found {}", t.name)));
        }
        let tensor = Tensor::new(t.shape, t.data).map_err(|e| ModelError::Checkpoint(format!("{name}: {e}")))?;
        tensors.push(tensor);
    }
    let params = ModelParams::from_tensors(c.dims, c.variant, tensors).map_err(ModelError::Checkpoint)?;
    if c.meta.stats.mean.len() != c.dims.attr_arity || c.meta.stats.std.len() != c.dims.attr_arity {
        return Err(ModelError::Checkpoint("normalization stats do not match attribute arity".into()));
    }
    Ok((params, c.meta))
}
