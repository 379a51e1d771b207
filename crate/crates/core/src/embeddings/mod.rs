//! Frame-level embeddings per source model and their pooling to chunk vectors.

mod feb;
mod mock;

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::segmentation::Chunk;

pub use feb::{read_feb, read_feb_from, write_feb, write_feb_to};
pub use mock::{mock_embed, MOCK_FRAME_S, MOCK_HOP_S, MOCK_MEL_BANDS};

/// Source models in fusion order.
pub const SSL_MODELS: [&str; 3] = ["wav2vec2", "hubert", "wavlm"];

/// Common fused dimension of the three released checkpoints.
pub const FUSED_DIM: usize = 1024;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("bad magic bytes (expected FEB1)")]
    BadMagic,
    #[error("unsupported FEB version {0}")]
    VersionMismatch(u32),
    #[error("truncated data: header promises {expected} payload bytes, found {found}")]
    TruncatedData { expected: u64, found: u64 },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("input shorter than one embedding frame")]
    TooShortInput,
    #[error("chunk has no frames to pool")]
    EmptyChunkFrames,
    #[error("source dimension {dim} exceeds target {target}")]
    DimensionExceedsTarget { dim: usize, target: usize },
    #[error("embedding file {path}: {source}")]
    File { path: String, source: Box<EmbeddingError> },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// `T x d` frame embeddings with timing metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbedding {
    pub model_id: String,
    /// Seconds between consecutive frames.
    pub hop: f64,
    /// Centre time of the first frame, seconds.
    pub offset: f64,
    pub matrix: Array2<f32>,
}

impl FrameEmbedding {
    pub fn frames(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn frame_center(&self, t: usize) -> f64 {
        self.offset + t as f64 * self.hop
    }
}

/// Rows whose centre lies in `[chunk.start, chunk.end)`.
pub fn slice_frames(fe: &FrameEmbedding, chunk: &Chunk) -> FrameEmbedding {
    let rows: Vec<usize> = (0..fe.frames())
        .filter(|&t| {
            let c = fe.frame_center(t);
            c >= chunk.start && c < chunk.end
        })
        .collect();
    let (offset, matrix) = match (rows.first(), rows.last()) {
        (Some(&a), Some(&b)) => (fe.frame_center(a), fe.matrix.slice(ndarray::s![a..=b, ..]).to_owned()),
        _ => (chunk.start, Array2::zeros((0, fe.dim()))),
    };
    FrameEmbedding { model_id: fe.model_id.clone(), hop: fe.hop, offset, matrix }
}

/// Column-wise mean, accumulated in f64.
pub fn mean_pool(fe: &FrameEmbedding) -> Result<Array1<f64>, EmbeddingError> {
    let t = fe.frames();
    if t == 0 {
        return Err(EmbeddingError::EmptyChunkFrames);
    }
    let mut acc = Array1::<f64>::zeros(fe.dim());
    for row in fe.matrix.axis_iter(Axis(0)) {
        acc.zip_mut_with(&row, |a, &v| *a += f64::from(v));
    }
    Ok(acc / t as f64)
}

/// Per-source chunk vectors brought to a common length.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkEmbedding {
    pub vectors: Vec<Array1<f64>>,
    pub target_dim: usize,
}

/// Zero-pads each vector at the tail to `target` entries.
pub fn project_to_common(vectors: &[Array1<f64>], target: usize) -> Result<ChunkEmbedding, EmbeddingError> {
    let vectors = vectors
        .iter()
        .map(|v| {
            if v.len() > target {
                return Err(EmbeddingError::DimensionExceedsTarget { dim: v.len(), target });
            }
            let mut out = Array1::zeros(target);
            out.slice_mut(ndarray::s![..v.len()]).assign(v);
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ChunkEmbedding { vectors, target_dim: target })
}

/// Where frame embeddings come from.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingSource {
    /// `<root>/<model>/<utterance_id>.feb`
    FebDir(PathBuf),
    /// Deterministic log-mel random projections of the given width.
    Mock { dim: usize, seed: u64 },
}

impl EmbeddingSource {
    pub fn feb_path(root: &Path, model: &str, utterance_id: &str) -> PathBuf {
        root.join(model).join(format!("{utterance_id}.feb"))
    }

    /// Frame embeddings of `buf` for source model `model_index`.
    pub fn frames(&self, buf: &AudioBuffer, model_index: usize) -> Result<FrameEmbedding, EmbeddingError> {
        match self {
            EmbeddingSource::FebDir(root) => {
                let path = Self::feb_path(root, SSL_MODELS[model_index], &buf.id);
                read_feb(&path)
                    .map_err(|e| EmbeddingError::File { path: path.display().to_string(), source: Box::new(e) })
            }
            EmbeddingSource::Mock { dim, seed } => {
                let s = crate::rng::derive_mock_seed(seed.wrapping_add(model_index as u64), &buf.id);
                let mut fe = mock_embed(buf, *dim, s)?;
                fe.model_id = format!("mock:{}", SSL_MODELS[model_index]);
                Ok(fe)
            }
        }
    }
}
