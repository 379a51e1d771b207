//! WAV loading, resampling and peak normalization.

use std::f64::consts::PI;
use std::path::Path;

use thiserror::Error;

/// Rate every downstream stage expects.
pub const TARGET_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio file not found: {0}")]
    MissingFile(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Mono PCM samples at a known rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub id: String,
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(id: impl Into<String>, samples: Vec<f32>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self { id: id.into(), samples, sample_rate }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }
}

/// Reads a PCM (integer) or IEEE-float WAV file, averaging channels to mono.
///
/// Integer samples of bit depth `b` are scaled by `2^(b-1)`, so `-32768` in a 16-bit
/// file becomes exactly `-1.0`.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(AudioError::MissingFile(path.display().to_string()));
    }
    let reader = hound::WavReader::open(path).map_err(map_hound_error)?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if channels == 0 || spec.sample_rate == 0 {
        return Err(AudioError::CorruptHeader(format!("channels={} sample_rate={}", spec.channels, spec.sample_rate)));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => {
            reader.into_samples::<f32>().collect::<Result<_, _>>().map_err(map_hound_error)?
        }
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (f64::from(v) * scale) as f32))
                .collect::<Result<_, _>>()
                .map_err(map_hound_error)?
        }
        (fmt, bits) => return Err(AudioError::UnsupportedEncoding(format!("{fmt:?} with {bits} bits"))),
    };
    if !interleaved.len().is_multiple_of(channels) {
        return Err(AudioError::CorruptHeader("sample count not a multiple of channels".into()));
    }
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| {
                let sum: f64 = frame.iter().map(|&s| f64::from(s)).sum();
                (sum / channels as f64) as f32
            })
            .collect()
    };
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(AudioBuffer::new(id, samples, spec.sample_rate))
}

fn map_hound_error(e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            AudioError::CorruptHeader("unexpected end of file".into())
        }
        hound::Error::IoError(io) => AudioError::Io(io),
        hound::Error::FormatError(msg) => AudioError::CorruptHeader(msg.to_string()),
        hound::Error::Unsupported => AudioError::UnsupportedEncoding("non-PCM format tag".into()),
        other => AudioError::UnsupportedEncoding(other.to_string()),
    }
}

/// Writes a mono 16-bit PCM WAV. Used by the synthetic corpus generator and tests.
pub fn write_wav_i16(path: impl AsRef<Path>, buf: &AudioBuffer) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(map_hound_error)?;
    for &s in &buf.samples {
        let v = (f64::from(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(map_hound_error)?;
    }
    w.finalize().map_err(map_hound_error)
}

const KAISER_BETA: f64 = 9.0;
const SINC_ZERO_CROSSINGS: f64 = 32.0;
const ROLLOFF: f64 = 0.94;

/// Band-limited resampling with a Kaiser-windowed sinc kernel.
///
/// The cutoff sits at `ROLLOFF` times the lower Nyquist frequency; with beta = 9 the
/// stopband attenuation is roughly 90 dB. The output has `round(n * target / source)`
/// samples. Equal rates return the input unchanged.
pub fn resample(buf: &AudioBuffer, target_hz: u32) -> AudioBuffer {
    assert!(target_hz > 0, "target rate must be positive");
    if buf.sample_rate == target_hz {
        return buf.clone();
    }
    let src = f64::from(buf.sample_rate);
    let dst = f64::from(target_hz);
    let ratio = dst / src;
    let out_len = (buf.samples.len() as f64 * ratio).round() as usize;
    // Cutoff relative to the input Nyquist.
    let cutoff = ratio.min(1.0) * ROLLOFF;
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    let i0_beta = bessel_i0(KAISER_BETA);
    let x = &buf.samples;
    let n = x.len() as isize;

    let samples = (0..out_len)
        .map(|j| {
            let center = j as f64 / ratio;
            let lo = (center - half_width).ceil().max(0.0) as isize;
            let hi = ((center + half_width).floor() as isize).min(n - 1);
            let mut acc = 0.0;
            for k in lo..=hi {
                let t = k as f64 - center;
                let w = kaiser(t / half_width, i0_beta);
                acc += f64::from(x[k as usize]) * cutoff * sinc(cutoff * t) * w;
            }
            acc as f32
        })
        .collect();
    AudioBuffer { id: buf.id.clone(), samples, sample_rate: target_hz }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn kaiser(r: f64, i0_beta: f64) -> f64 {
    if r.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Scales so the largest magnitude becomes 1.0. All-zero input is returned as is.
pub fn normalize_amplitude(buf: &AudioBuffer) -> AudioBuffer {
    let peak = buf.peak();
    if peak == 0.0 || !peak.is_finite() {
        return buf.clone();
    }
    let inv = 1.0 / f64::from(peak);
    let samples =
        buf.samples.iter().map(|&s| if s.abs() == peak { s.signum() } else { (f64::from(s) * inv) as f32 }).collect();
    AudioBuffer { id: buf.id.clone(), samples, sample_rate: buf.sample_rate }
}

/// Load, resample to 16 kHz, peak-normalize.
pub fn load_prepared(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let raw = load_wav(path)?;
    Ok(normalize_amplitude(&resample(&raw, TARGET_SAMPLE_RATE)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(freq: f64, rate: u32, secs: f64) -> AudioBuffer {
        let n = (f64::from(rate) * secs).round() as usize;
        let s = (0..n).map(|i| (0.8 * (2.0 * PI * freq * i as f64 / f64::from(rate)).sin()) as f32).collect();
        AudioBuffer::new("sine", s, rate)
    }

    #[test]
    fn resample_identity_is_bitwise() {
        let b = sine(440.0, 16_000, 0.1);
        assert_eq!(resample(&b, 16_000), b);
    }

    #[test]
    fn resample_48k_to_16k_length() {
        let b = AudioBuffer::new("z", vec![0.0; 48_000], 48_000);
        assert_eq!(resample(&b, 16_000).samples.len(), 16_000);
    }

    #[test]
    fn resampled_sine_matches_analytic_sine() {
        let b = sine(440.0, 48_000, 1.0);
        let r = resample(&b, 16_000);
        // Skip the kernel support at each edge, where the input is truncated.
        let margin = (SINC_ZERO_CROSSINGS / (ROLLOFF / 3.0) / 3.0).ceil() as usize + 1;
        let mut worst = 0.0f64;
        for (j, &y) in r.samples.iter().enumerate().skip(margin).take(r.samples.len() - 2 * margin) {
            let t = j as f64 / 16_000.0;
            let expect = 0.8 * (2.0 * PI * 440.0 * t).sin();
            worst = worst.max((f64::from(y) - expect).abs());
        }
        assert!(worst < 1e-3, "worst error {worst}");
    }

    #[test]
    fn stopband_rejects_aliasing_tone() {
        // 12 kHz is above the 8 kHz output Nyquist and must be suppressed by >= 60 dB.
        let b = sine(12_000.0, 48_000, 0.5);
        let r = resample(&b, 16_000);
        let margin = 400;
        let inner = &r.samples[margin..r.samples.len() - margin];
        let rms = (inner.iter().map(|&s| f64::from(s).powi(2)).sum::<f64>() / inner.len() as f64).sqrt();
        let input_rms = 0.8 / 2f64.sqrt();
        assert!(20.0 * (rms / input_rms).log10() < -60.0, "rms {rms}");
    }

    #[test]
    fn normalize_examples() {
        let b = AudioBuffer::new("a", vec![0.5, -0.25], 16_000);
        assert_eq!(normalize_amplitude(&b).samples, vec![1.0, -0.5]);
        let z = AudioBuffer::new("z", vec![0.0; 10], 16_000);
        assert_eq!(normalize_amplitude(&z), z);
    }

    proptest! {
        #[test]
        fn normalize_peak_and_ratios(xs in prop::collection::vec(-1.0f32..1.0, 2..200)) {
            let b = AudioBuffer::new("r", xs.clone(), 16_000);
            prop_assume!(b.peak() > 1e-3);
            let n = normalize_amplitude(&b);
            prop_assert!((n.peak() - 1.0).abs() <= 1e-7);
            let scale = 1.0 / f64::from(b.peak());
            for (a, o) in xs.iter().zip(&n.samples) {
                prop_assert!((f64::from(*a) * scale - f64::from(*o)).abs() < 1e-6);
            }
            prop_assert_eq!(normalize_amplitude(&n), n.clone());
        }

        #[test]
        fn resampling_preserves_duration(
            r1 in prop::sample::select(vec![8_000u32, 16_000, 44_100, 48_000]),
            r2 in prop::sample::select(vec![8_000u32, 16_000, 44_100, 48_000]),
            n in 100usize..3000,
        ) {
            let b = AudioBuffer::new("d", vec![0.1; n], r1);
            let out = resample(&b, r2);
            // within one output sample of the input duration
            prop_assert!((out.duration_seconds() - b.duration_seconds()).abs() <= 1.0 / f64::from(r2) + 1e-12);
        }
    }
}
