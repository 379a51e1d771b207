//! Simplex-weighted fusion of per-source chunk embeddings and the CNN-BiLSTM classifier.
//!
//! An utterance is a sequence of `M` chunks. Each chunk carries one vector per source model
//! plus `k` fluency markers. The network fuses the sources with `alpha = softmax(theta)`,
//! appends the standardized markers, runs a same-padded 1-D convolution along the chunk
//! axis (input channels = embedding dimensions), a stack of bidirectional LSTM layers,
//! mean-pools over chunks, and classifies with a dense layer and softmax.

mod checkpoint;
mod gradcheck;
mod network;
mod params;
mod train;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::MarkerStats;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use gradcheck::{compare_gradients, grad_check, CoordinateCheck, GradCheckOptions, GradCheckReport};
pub use network::{backward, forward, ForwardCache, Gradients};
pub use params::{LstmDirection, Params};
pub use train::{train, EpochRecord, Trainer, TrainingHistory};

pub const NUM_CLASSES: usize = 3;

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("utterance has no chunks")]
    EmptyUtterance,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("input shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("gradient mismatch on {failed} of {checked} coordinates; worst: {worst}")]
    GradientMismatch { failed: usize, checked: usize, worst: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub conv_filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub dropout: f64,
    pub classes: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            conv_filters: 128,
            kernel: 3,
            stride: 1,
            lstm_layers: 2,
            lstm_hidden: 256,
            dropout: 0.3,
            classes: NUM_CLASSES,
            learning_rate: 1e-4,
            epochs: 200,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.conv_filters == 0 || self.lstm_layers == 0 || self.lstm_hidden == 0 {
            return bad("layer sizes must be positive");
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return bad("kernel must be odd for same padding");
        }
        if self.stride != 1 {
            return bad("only stride 1 is supported with same padding");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.classes < 2 {
            return bad("need at least two classes");
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad("learning rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        Ok(())
    }
}

/// Widths of the per-chunk inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub sources: usize,
    pub dim: usize,
    pub markers: usize,
}

impl InputShape {
    pub fn width(&self) -> usize {
        self.dim + self.markers
    }
}

/// How source embeddings are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// `alpha = softmax(theta)`, `theta` trained with the classifier.
    Learned,
    /// `alpha` is the one-hot vector selecting this source.
    Fixed(usize),
}

/// Per-chunk inputs of one utterance. `sources[j]` and `markers` have `M` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceInput {
    pub sources: Vec<Array2<f64>>,
    pub markers: Array2<f64>,
}

impl UtteranceInput {
    pub fn chunks(&self) -> usize {
        self.markers.nrows()
    }

    pub fn shape(&self) -> Option<InputShape> {
        let first = self.sources.first()?;
        Some(InputShape { sources: self.sources.len(), dim: first.ncols(), markers: self.markers.ncols() })
    }

    pub fn check(&self, shape: &InputShape) -> Result<(), ModelError> {
        let m = self.chunks();
        if m == 0 {
            return Err(ModelError::EmptyUtterance);
        }
        if self.sources.len() != shape.sources || self.markers.ncols() != shape.markers {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {} sources and {} markers, got {} and {}",
                shape.sources,
                shape.markers,
                self.sources.len(),
                self.markers.ncols()
            )));
        }
        if self.sources.iter().any(|s| s.nrows() != m || s.ncols() != shape.dim) {
            return Err(ModelError::ShapeMismatch(format!("every source must be {m} x {}", shape.dim)));
        }
        Ok(())
    }

    /// Copy with markers standardized by `stats`.
    pub fn standardized(&self, stats: &MarkerStats) -> Self {
        let mut out = self.clone();
        for mut row in out.markers.rows_mut() {
            stats.apply(row.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

/// One labelled utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    pub input: UtteranceInput,
}

pub fn softmax(logits: &[f64]) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Array1<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let s = e.sum();
    e / s
}

/// Fusion weights for `theta` under `mode`.
pub fn fusion_weights(theta: &Array1<f64>, mode: FusionMode) -> Array1<f64> {
    match mode {
        FusionMode::Learned => softmax(theta.as_slice().expect("contiguous")),
        FusionMode::Fixed(j) => Array1::from_shape_fn(theta.len(), |i| if i == j { 1.0 } else { 0.0 }),
    }
}

/// Convex combination of the per-source vectors.
pub fn fuse(vectors: &[Array1<f64>], alpha: &Array1<f64>) -> Array1<f64> {
    assert_eq!(vectors.len(), alpha.len(), "one weight per source");
    let mut out = Array1::zeros(vectors[0].len());
    for (v, &a) in vectors.iter().zip(alpha) {
        out.scaled_add(a, v);
    }
    out
}

/// Cross-entropy `-ln max(p[label], 1e-12)`.
pub fn loss(probs: &Array1<f64>, label: usize) -> f64 {
    -probs[label].max(PROB_FLOOR).ln()
}

/// Argmax with ties going to the lower index.
pub fn argmax(probs: &Array1<f64>) -> usize {
    probs.iter().enumerate().fold(0, |best, (i, &p)| if p > probs[best] { i } else { best })
}

/// A trained classifier with everything needed for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub shape: InputShape,
    pub fusion: FusionMode,
    pub params: Params,
    pub marker_stats: MarkerStats,
}

impl TrainedModel {
    pub fn alpha(&self) -> Array1<f64> {
        fusion_weights(&self.params.theta, self.fusion)
    }

    /// Class probabilities for raw (unstandardized) inputs, dropout off.
    pub fn probabilities(&self, input: &UtteranceInput) -> Result<Array1<f64>, ModelError> {
        input.check(&self.shape)?;
        let x = input.standardized(&self.marker_stats);
        Ok(forward(&self.params, &self.config, self.fusion, &x, None).probs)
    }

    pub fn predict(&self, input: &UtteranceInput) -> Result<(usize, Array1<f64>), ModelError> {
        let p = self.probabilities(input)?;
        Ok((argmax(&p), p))
    }

    /// Short hex digest of config, shape and fusion mode.
    pub fn fingerprint(&self) -> String {
        let v = serde_json::json!({ "config": self.config, "shape": self.shape, "fusion": self.fusion });
        fingerprint_json(&v)
    }
}

/// First 16 hex digits of the SHA-256 of the compact JSON encoding.
pub fn fingerprint_json(v: &serde_json::Value) -> String {
    let digest = Sha256::digest(v.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
