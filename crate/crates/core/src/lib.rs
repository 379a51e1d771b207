//! Speech fluency scoring from breath-group chunks.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! * [`audio`] loads WAV files and brings them to mono, 16 kHz, peak-normalized samples.
//! * [`segmentation`] finds speech regions and splits them into breath-group chunks at
//!   silences of at least `delta_ms`.
//! * [`features`] computes per-chunk fluency markers and voice-quality measures.
//! * [`embeddings`] reads frame embeddings (FEB1 files or a deterministic mock) and pools
//!   them per chunk.
//! * [`model`] fuses the per-source chunk embeddings with softmax-simplex weights and
//!   classifies utterances with a CNN-BiLSTM trained by hand-written backprop.
//! * [`eval`] holds metrics, cross-validation, and the experiment/ablation runners.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the `parallel` feature is
//! enabled and plain iterators otherwise.

pub mod audio;
pub mod embeddings;
pub mod eval;
pub mod features;
pub mod model;
pub mod par;
pub mod rng;
pub mod segmentation;
pub mod synth;

pub use audio::AudioBuffer;
pub use segmentation::{Chunk, SpeechRegion, VadConfig};
