//! Run configuration: optional TOML/JSON file, then command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::Context;
use fluency_core::embeddings::EmbeddingSource;
use fluency_core::eval::{ExperimentConfig, Protocol};
use fluency_core::model::ModelConfig;
use fluency_core::segmentation::{VadConfig, DEFAULT_DELTA_MS};
use serde::{Deserialize, Serialize};

use crate::Invalid;

/// Everything a run depends on. Unknown keys in a config file are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub delta_ms: f64,
    pub chunking: bool,
    pub markers: bool,
    pub vq_markers: bool,
    pub ngram_order: usize,
    pub protocol: Protocol,
    pub folds: usize,
    /// `mock` or a directory of FEB1 files laid out as `<dir>/<model>/<id>.feb`.
    pub embeddings: String,
    pub mock_dim: usize,
    pub vad_json: Option<PathBuf>,
    pub vad: VadConfig,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            seed: 0,
            delta_ms: DEFAULT_DELTA_MS,
            chunking: e.chunking,
            markers: e.markers,
            vq_markers: e.vq_markers,
            ngram_order: e.ngram_order,
            protocol: e.protocol,
            folds: e.folds,
            embeddings: "mock".into(),
            mock_dim: 64,
            vad_json: None,
            vad: e.vad,
            model: e.model,
        }
    }
}

impl RunConfig {
    /// Reads a config file, choosing the parser from the extension.
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => {
                toml::from_str(&text).map_err(|e| anyhow::Error::new(Invalid(format!("{}: {e}", path.display()))))
            }
            Some("json") => {
                serde_json::from_str(&text).map_err(|e| anyhow::Error::new(Invalid(format!("{}: {e}", path.display()))))
            }
            _ => Err(anyhow::Error::new(Invalid(format!("{}: config must end in .toml or .json", path.display())))),
        }?;
        Ok(parsed)
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            vad: self.vad.clone(),
            delta_ms: self.delta_ms,
            chunking: self.chunking,
            markers: self.markers,
            vq_markers: self.vq_markers,
            ngram_order: self.ngram_order,
            protocol: self.protocol,
            folds: self.folds,
            seed: self.seed,
            model: ModelConfig { seed: self.seed, ..self.model.clone() },
        }
    }

    pub fn source(&self) -> EmbeddingSource {
        if self.embeddings == "mock" {
            EmbeddingSource::Mock { dim: self.mock_dim, seed: self.seed }
        } else {
            EmbeddingSource::FebDir(PathBuf::from(&self.embeddings))
        }
    }

    pub fn validate(&self) -> Result<(), Invalid> {
        self.experiment().validate().map_err(|e| Invalid(e.to_string()))?;
        if self.embeddings == "mock" && self.mock_dim == 0 {
            return Err(Invalid("mock_dim must be positive".into()));
        }
        Ok(())
    }
}
