//! Labels, metrics, cross-validation and experiment runners.

mod cv;
mod manifest;
mod metrics;
mod pipeline;

use thiserror::Error;

pub use cv::{kfold_split, Fold};
pub use manifest::{load_manifest, parse_manifest, write_manifest, ManifestEntry, RawLabel, Split};
pub use metrics::{bucket_score, confusion_matrix, macro_f1, micro_f1, pearson, FluencyLabel};
pub use pipeline::{
    aggregate, describe_source, evaluate_model, prepare_corpus, reference_targets, run_ablation, run_condition,
    run_experiment, utterance_chunks, write_embeddings_csv, write_summary_csv, Condition, ExperimentConfig,
    ExperimentReport, FoldMetrics, FoldResult, Prediction, PreparedCorpus, PreparedUtterance, Protocol,
    ReferenceTarget, RegionMap, SkippedUtterance, SUMMARY_CSV_HEADER, VQ_MARKER_NAMES,
};

use crate::audio::AudioError;
use crate::embeddings::EmbeddingError;
use crate::model::ModelError;
use crate::segmentation::SegmentationError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("score {0} is outside 0..=10")]
    OutOfRange(i64),
    #[error("unrecognized label {0:?}")]
    BadLabel(String),
    #[error("{preds} predictions but {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("metric needs more samples")]
    EmptyInput,
    #[error("correlation undefined for constant input")]
    ConstantInput,
    #[error("{samples} samples cannot fill {folds} folds")]
    TooFewSamples { samples: usize, folds: usize },
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("entry {id}: {msg}")]
    BadEntry { id: String, msg: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no utterance survived preparation")]
    NothingToEvaluate,
    #[error("embeddings for {id}: {source}")]
    Embedding { id: String, source: EmbeddingError },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
