//! Deterministic stand-in for a neural frame encoder.
//!
//! 25 ms Hann frames at a 20 ms hop, 40-band log-mel energies, a fixed Gaussian random
//! projection to the requested width, then per-utterance column standardization. The
//! output is a test fixture and says nothing about learned speech representations.

use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use super::{EmbeddingError, FrameEmbedding};
use crate::audio::AudioBuffer;
use crate::rng::SplitMix64;

pub const MOCK_FRAME_S: f64 = 0.025;
pub const MOCK_HOP_S: f64 = 0.020;
pub const MOCK_MEL_BANDS: usize = 40;
const LOG_EPS: f64 = 1e-10;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-style filters over `n_bins` rFFT bins, `bands x n_bins`.
fn mel_filterbank(bands: usize, n_fft: usize, sr: f64) -> Array2<f64> {
    let n_bins = n_fft / 2 + 1;
    let top = hz_to_mel(sr / 2.0);
    let edges: Vec<f64> = (0..bands + 2).map(|i| mel_to_hz(top * i as f64 / (bands + 1) as f64)).collect();
    let bin_hz = |k: usize| k as f64 * sr / n_fft as f64;
    Array2::from_shape_fn((bands, n_bins), |(b, k)| {
        let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
        let f = bin_hz(k);
        if f <= lo || f >= hi {
            0.0
        } else if f <= mid {
            (f - lo) / (mid - lo)
        } else {
            (hi - f) / (hi - mid)
        }
    })
}

/// Log-mel frames, `T x 40`.
pub(crate) fn log_mel(buf: &AudioBuffer) -> Result<Array2<f64>, EmbeddingError> {
    let sr = f64::from(buf.sample_rate);
    let frame = (MOCK_FRAME_S * sr).round() as usize;
    let hop = (MOCK_HOP_S * sr).round() as usize;
    if frame == 0 || buf.samples.len() < frame {
        return Err(EmbeddingError::TooShortInput);
    }
    let n_frames = (buf.samples.len() - frame) / hop + 1;
    let n_fft = frame.next_power_of_two();
    let fb = mel_filterbank(MOCK_MEL_BANDS, n_fft, sr);
    let window: Vec<f64> = (0..frame).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / frame as f64).cos()).collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut out = Array2::zeros((n_frames, MOCK_MEL_BANDS));
    let mut spec = vec![Complex::new(0.0, 0.0); n_fft];
    for t in 0..n_frames {
        let x = &buf.samples[t * hop..t * hop + frame];
        for (i, s) in spec.iter_mut().enumerate() {
            *s = if i < frame { Complex::new(f64::from(x[i]) * window[i], 0.0) } else { Complex::new(0.0, 0.0) };
        }
        fft.process(&mut spec);
        let power: Vec<f64> = spec[..n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        for b in 0..MOCK_MEL_BANDS {
            let e: f64 = fb.row(b).iter().zip(&power).map(|(w, p)| w * p).sum();
            out[[t, b]] = (e + LOG_EPS).ln();
        }
    }
    Ok(out)
}

/// Mock frame embeddings of width `dim`, fully determined by `(samples, dim, seed)`.
pub fn mock_embed(buf: &AudioBuffer, dim: usize, seed: u64) -> Result<FrameEmbedding, EmbeddingError> {
    if dim == 0 {
        return Err(EmbeddingError::InvalidHeader("dim must be positive".into()));
    }
    let mel = log_mel(buf)?;
    let mut g = SplitMix64::new(seed);
    let scale = 1.0 / (MOCK_MEL_BANDS as f64).sqrt();
    // projection drawn row-major: dim rows of 40 normals
    let proj = Array2::from_shape_fn((dim, MOCK_MEL_BANDS), |_| g.next_normal() * scale);
    let mut z = mel.dot(&proj.t());
    let t = z.nrows() as f64;
    for mut col in z.columns_mut() {
        let mean = col.sum() / t;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
        let sd = var.sqrt();
        col.mapv_inplace(|v| if sd > 1e-9 * mean.abs().max(1.0) { (v - mean) / sd } else { 0.0 });
    }
    let sr = f64::from(buf.sample_rate);
    Ok(FrameEmbedding {
        model_id: "mock".into(),
        hop: (MOCK_HOP_S * sr).round() / sr,
        offset: (MOCK_FRAME_S * sr).round() / sr / 2.0,
        matrix: z.mapv(|v| v as f32),
    })
}
