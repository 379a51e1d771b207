//! Checkpoint directory: `meta.json` plus `weights.bin` (little-endian `f32` tensors in
//! manifest order).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FusionMode, InputShape, ModelConfig, Params, TrainedModel};
use crate::features::MarkerStats;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid meta.json: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("tensor manifest does not match the model layout: {0}")]
    Manifest(String),
    #[error("weights.bin has {found} bytes, manifest needs {expected}")]
    Truncated { expected: u64, found: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub config: ModelConfig,
    pub shape: InputShape,
    pub fusion: FusionMode,
    pub alpha: Vec<f64>,
    pub marker_stats: MarkerStats,
    pub seed: u64,
    pub fingerprint: String,
    pub tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(dir: impl AsRef<Path>, model: &TrainedModel) -> Result<(), CheckpointError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut offset = 0u64;
    let mut tensors = Vec::new();
    let mut payload = Vec::with_capacity(model.params.len() * 4);
    for ((name, shape), data) in model.params.manifest().into_iter().zip(model.params.tensors()) {
        let bytes = data.len() as u64 * 4;
        tensors.push(TensorEntry { name, shape, offset, bytes });
        offset += bytes;
        for v in data {
            payload.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let meta = CheckpointMeta {
        format_version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        shape: model.shape,
        fusion: model.fusion,
        alpha: model.alpha().to_vec(),
        marker_stats: model.marker_stats.clone(),
        seed: model.config.seed,
        fingerprint: model.fingerprint(),
        tensors,
    };
    let mut w = std::fs::File::create(dir.join("weights.bin"))?;
    w.write_all(&payload)?;
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<TrainedModel, CheckpointError> {
    let dir = dir.as_ref();
    let meta: CheckpointMeta = serde_json::from_slice(&std::fs::read(dir.join("meta.json"))?)?;
    if meta.format_version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(meta.format_version));
    }
    meta.config.validate().map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    let mut params = Params::zeros(&meta.config, &meta.shape);
    let layout = params.manifest();
    if layout.len() != meta.tensors.len() {
        return Err(CheckpointError::Manifest(format!("{} tensors, expected {}", meta.tensors.len(), layout.len())));
    }
    for ((name, shape), entry) in layout.iter().zip(&meta.tensors) {
        if *name != entry.name || *shape != entry.shape {
            return Err(CheckpointError::Manifest(format!("{} {:?} vs {} {:?}", entry.name, entry.shape, name, shape)));
        }
    }
    let bytes = std::fs::read(dir.join("weights.bin"))?;
    let expected = meta.tensors.iter().map(|t| t.bytes).sum::<u64>();
    if bytes.len() as u64 != expected {
        return Err(CheckpointError::Truncated { expected, found: bytes.len() as u64 });
    }
    for ((_, dst), entry) in params.tensors_mut().into_iter().zip(&meta.tensors) {
        let start = entry.offset as usize;
        let end = start + entry.bytes as usize;
        if end > bytes.len() || entry.bytes as usize != dst.len() * 4 {
            return Err(CheckpointError::Manifest(format!("bad extent for {}", entry.name)));
        }
        for (d, b) in dst.iter_mut().zip(bytes[start..end].chunks_exact(4)) {
            *d = f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        }
    }
    Ok(TrainedModel {
        config: meta.config,
        shape: meta.shape,
        fusion: meta.fusion,
        params,
        marker_stats: meta.marker_stats,
    })
}
