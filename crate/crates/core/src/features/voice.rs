//! Autocorrelation pitch tracking with shimmer and HNR.
//!
//! Analysis uses 40 ms frames at a 10 ms hop. A frame is voiced when its normalized
//! autocorrelation peaks at or above 0.3 for some lag in the 50–500 Hz range.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::segmentation::Chunk;

const FRAME_S: f64 = 0.040;
const HOP_S: f64 = 0.010;
const F0_MIN: f64 = 50.0;
const F0_MAX: f64 = 500.0;
const VOICING_THRESHOLD: f64 = 0.3;
/// Earliest local maximum within this fraction of the global maximum is taken as the
/// period, which avoids picking a multiple of it.
const OCTAVE_TOLERANCE: f64 = 0.9;
const MIN_CHUNK_S: f64 = 0.100;

#[derive(Debug, Error)]
pub enum VoiceQualityError {
    #[error("chunk of {0:.3} s is shorter than 100 ms")]
    TooShortChunk(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceQuality {
    pub f0_mean: Option<f64>,
    pub f0_std: Option<f64>,
    pub shimmer_pct: Option<f64>,
    pub hnr_db: Option<f64>,
    pub voiced_fraction: f64,
}

struct FrameAnalysis {
    /// `(f0, r_max)` for voiced frames.
    voiced: Option<(f64, f64)>,
}

fn analyze_frame(x: &[f64], sr: f64) -> FrameAnalysis {
    let n = x.len();
    let min_lag = (sr / F0_MAX).ceil() as usize;
    let max_lag = ((sr / F0_MIN).floor() as usize).min(n.saturating_sub(2));
    if min_lag + 2 > max_lag || x.iter().all(|&v| v == 0.0) {
        return FrameAnalysis { voiced: None };
    }
    // r[lag - min_lag + 1]; one lag of padding on each side for the local-max test
    let lags = (min_lag - 1)..=(max_lag + 1).min(n - 1);
    let r: Vec<f64> = lags
        .clone()
        .map(|lag| {
            let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
            for i in 0..n - lag {
                let a = x[i];
                let b = x[i + lag];
                xy += a * b;
                xx += a * a;
                yy += b * b;
            }
            let den = (xx * yy).sqrt();
            if den > 0.0 {
                xy / den
            } else {
                0.0
            }
        })
        .collect();
    let base = min_lag - 1;
    let mut inner = 1..r.len() - 1;
    let (best_i, r_max) =
        inner.clone().map(|i| (i, r[i])).fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
    if r_max < VOICING_THRESHOLD {
        return FrameAnalysis { voiced: None };
    }
    let pick =
        inner.find(|&i| r[i] >= r[i - 1] && r[i] >= r[i + 1] && r[i] >= OCTAVE_TOLERANCE * r_max).unwrap_or(best_i);
    // parabolic refinement of the lag
    let (a, b, c) = (r[pick - 1], r[pick], r[pick + 1]);
    let den = a - 2.0 * b + c;
    let shift = if den.abs() > 1e-12 { (0.5 * (a - c) / den).clamp(-0.5, 0.5) } else { 0.0 };
    let lag = (base + pick) as f64 + shift;
    let f0 = sr / lag;
    if !(F0_MIN..=F0_MAX).contains(&f0) {
        return FrameAnalysis { voiced: None };
    }
    FrameAnalysis { voiced: Some((f0, r_max)) }
}

/// Positive peak amplitudes of successive pitch periods in `x`.
fn period_peaks(x: &[f64], period: f64) -> Vec<f64> {
    let t = period.round().max(2.0) as usize;
    if x.len() < 2 * t {
        return Vec::new();
    }
    let argmax = |lo: usize, hi: usize| -> usize { (lo..hi).fold(lo, |best, i| if x[i] > x[best] { i } else { best }) };
    let mut peaks = Vec::new();
    let mut p = argmax(0, t);
    peaks.push(x[p]);
    loop {
        let lo = p + (0.75 * period).round() as usize;
        let hi = p + (1.25 * period).round() as usize + 1;
        if hi > x.len() {
            break;
        }
        p = argmax(lo, hi);
        peaks.push(x[p]);
    }
    peaks
}

/// F0 statistics, shimmer, and HNR over the voiced frames of `chunk`.
pub fn voice_quality(buf: &AudioBuffer, chunk: &Chunk) -> Result<VoiceQuality, VoiceQualityError> {
    let dur = chunk.duration();
    if dur < MIN_CHUNK_S - 1e-9 {
        return Err(VoiceQualityError::TooShortChunk(dur));
    }
    let sr = f64::from(buf.sample_rate);
    let lo = ((chunk.start * sr).round().max(0.0) as usize).min(buf.samples.len());
    let hi = ((chunk.end * sr).round() as usize).min(buf.samples.len());
    let x: Vec<f64> = buf.samples[lo..hi].iter().map(|&s| f64::from(s)).collect();
    let frame = (FRAME_S * sr).round() as usize;
    let hop = (HOP_S * sr).round() as usize;
    if x.len() < frame {
        return Ok(VoiceQuality { f0_mean: None, f0_std: None, shimmer_pct: None, hnr_db: None, voiced_fraction: 0.0 });
    }
    let n_frames = (x.len() - frame) / hop + 1;
    let frames: Vec<FrameAnalysis> = (0..n_frames).map(|j| analyze_frame(&x[j * hop..j * hop + frame], sr)).collect();

    let voiced: Vec<(usize, f64, f64)> =
        frames.iter().enumerate().filter_map(|(j, f)| f.voiced.map(|(f0, r)| (j, f0, r))).collect();
    let voiced_fraction = voiced.len() as f64 / n_frames as f64;
    if voiced.is_empty() {
        return Ok(VoiceQuality { f0_mean: None, f0_std: None, shimmer_pct: None, hnr_db: None, voiced_fraction });
    }

    let nv = voiced.len() as f64;
    let f0_mean = voiced.iter().map(|v| v.1).sum::<f64>() / nv;
    let f0_std = (voiced.iter().map(|v| (v.1 - f0_mean).powi(2)).sum::<f64>() / nv).sqrt();
    let hnr_db = voiced
        .iter()
        .map(|v| {
            let r = v.2.clamp(1e-6, 1.0 - 1e-9);
            10.0 * (r / (1.0 - r)).log10()
        })
        .sum::<f64>()
        / nv;

    // shimmer over runs of consecutive voiced frames
    let mut diffs = 0.0;
    let mut n_diffs = 0usize;
    let mut amp_sum = 0.0;
    let mut n_amps = 0usize;
    let mut k = 0;
    while k < voiced.len() {
        let mut e = k;
        while e + 1 < voiced.len() && voiced[e + 1].0 == voiced[e].0 + 1 {
            e += 1;
        }
        let run = &voiced[k..=e];
        let f0 = run.iter().map(|v| v.1).sum::<f64>() / run.len() as f64;
        let seg = &x[run[0].0 * hop..run[run.len() - 1].0 * hop + frame];
        let peaks = period_peaks(seg, sr / f0);
        for w in peaks.windows(2) {
            diffs += (w[1] - w[0]).abs();
            n_diffs += 1;
        }
        amp_sum += peaks.iter().sum::<f64>();
        n_amps += peaks.len();
        k = e + 1;
    }
    let shimmer_pct =
        (n_diffs > 0 && amp_sum > 0.0).then(|| 100.0 * (diffs / n_diffs as f64) / (amp_sum / n_amps as f64));

    Ok(VoiceQuality {
        f0_mean: Some(f0_mean),
        f0_std: Some(f0_std),
        shimmer_pct,
        hnr_db: Some(hnr_db),
        voiced_fraction,
    })
}
