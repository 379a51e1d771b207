//! Synthetic audio and datasets with known structure, for tests, benches and demos.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::audio::{write_wav_i16, AudioError};
use crate::eval::{write_manifest, EvalError, ManifestEntry, RawLabel, Split};
use crate::model::{Sample, UtteranceInput};
use crate::rng::{mix_seed, SplitMix64};
use crate::AudioBuffer;

pub const SR: u32 = 16_000;

fn samples_for(ms: f64) -> usize {
    (ms * f64::from(SR) / 1000.0).round() as usize
}

/// Alternating silence/noise pattern: leading silence, then `speech_ms` of noise between
/// each pair of gaps, then trailing silence. All durations in milliseconds.
pub fn gap_utterance(id: &str, gaps_ms: &[f64], speech_ms: f64, edge_ms: f64, seed: u64) -> AudioBuffer {
    let mut g = SplitMix64::new(seed);
    let mut s = vec![0.0f32; samples_for(edge_ms)];
    let mut burst = |s: &mut Vec<f32>| s.extend((0..samples_for(speech_ms)).map(|_| (g.next_f64() - 0.5) as f32));
    burst(&mut s);
    for &gap in gaps_ms {
        s.extend(std::iter::repeat_n(0.0, samples_for(gap)));
        burst(&mut s);
    }
    s.extend(std::iter::repeat_n(0.0, samples_for(edge_ms)));
    AudioBuffer::new(id, s, SR)
}

/// Sine whose amplitude is redrawn every period as `1 + depth` or `1 - depth`.
pub fn am_sine(freq: f64, depth: f64, seconds: f64, seed: u64) -> AudioBuffer {
    let mut g = SplitMix64::new(seed);
    let n = (seconds * f64::from(SR)) as usize;
    let period = f64::from(SR) / freq;
    let mut amp = 1.0;
    let mut cycle = usize::MAX;
    let samples = (0..n)
        .map(|i| {
            let c = (i as f64 / period) as usize;
            if c != cycle {
                cycle = c;
                amp = if g.next_u64() & 1 == 0 { 1.0 + depth } else { 1.0 - depth };
            }
            (0.5 * amp * (2.0 * PI * freq * i as f64 / f64::from(SR)).sin()) as f32
        })
        .collect();
    AudioBuffer::new("am", samples, SR)
}

/// Per-class timing of the synthetic speaker.
struct Style {
    f0: f64,
    word_ms: (f64, f64),
    pause_ms: (f64, f64),
    repeat_prob: f64,
}

fn style(class: usize) -> Style {
    match class {
        0 => Style { f0: 110.0, word_ms: (420.0, 480.0), pause_ms: (700.0, 950.0), repeat_prob: 0.4 },
        1 => Style { f0: 150.0, word_ms: (280.0, 320.0), pause_ms: (450.0, 550.0), repeat_prob: 0.15 },
        _ => Style { f0: 200.0, word_ms: (170.0, 200.0), pause_ms: (320.0, 380.0), repeat_prob: 0.0 },
    }
}

const VOCAB: [&str; 16] = [
    "the", "river", "carries", "small", "boats", "along", "quiet", "banks", "every", "morning", "people", "walk",
    "beside", "water", "talking", "slowly",
];

/// A speech-like utterance: breath groups of harmonic "words" separated by pauses.
#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub buffer: AudioBuffer,
    pub label: usize,
    pub tokens: Vec<String>,
    pub word_times: Vec<(f64, f64)>,
    /// Number of breath groups, which is the intended chunk count.
    pub groups: usize,
}

fn uniform(g: &mut SplitMix64, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * g.next_f64()
}

/// Rounds to the 10 ms grid so segment edges fall on analysis-hop boundaries.
fn grid(ms: f64) -> f64 {
    (ms / 10.0).round() * 10.0
}

pub fn speech_like(id: &str, class: usize, groups: usize, seed: u64) -> SynthUtterance {
    let st = style(class);
    let mut g = SplitMix64::new(seed);
    let f0 = st.f0 * (1.0 + 0.03 * (g.next_f64() - 0.5));
    let sr = f64::from(SR);
    let mut samples: Vec<f32> = Vec::new();
    let mut tokens = Vec::new();
    let mut times = Vec::new();
    let silence = |s: &mut Vec<f32>, ms: f64, g: &mut SplitMix64| {
        s.extend((0..samples_for(ms)).map(|_| (1e-3 * (g.next_f64() - 0.5)) as f32));
    };
    silence(&mut samples, 200.0, &mut g);
    let mut prev: Option<&str> = None;
    for group in 0..groups {
        if group > 0 {
            silence(&mut samples, grid(uniform(&mut g, st.pause_ms)), &mut g);
        }
        let words = 2 + (g.next_u64() % 3) as usize;
        for w in 0..words {
            if w > 0 {
                silence(&mut samples, 40.0, &mut g);
            }
            let word = match prev {
                Some(p) if g.next_f64() < st.repeat_prob => p,
                _ => VOCAB[(g.next_u64() % VOCAB.len() as u64) as usize],
            };
            prev = Some(word);
            let n = samples_for(grid(uniform(&mut g, st.word_ms)));
            let start = samples.len();
            let jitter = 1.0 + 0.02 * (g.next_f64() - 0.5);
            for i in 0..n {
                let t = i as f64 / sr;
                let mut v = 0.0;
                for h in 1..=8 {
                    v += (2.0 * PI * f0 * jitter * h as f64 * t).cos() / h as f64;
                }
                samples.push((0.25 * v) as f32);
            }
            tokens.push(word.to_string());
            times.push((start as f64 / sr, (start + n) as f64 / sr));
        }
    }
    silence(&mut samples, 200.0, &mut g);
    SynthUtterance { buffer: AudioBuffer::new(id, samples, SR), label: class, tokens, word_times: times, groups }
}

/// Balanced synthetic corpus of `n` utterances with 2 to 8 breath groups each.
pub fn speech_corpus(n: usize, seed: u64) -> Vec<SynthUtterance> {
    (0..n)
        .map(|i| {
            let s = mix_seed(&[seed, i as u64]);
            let groups = 2 + (s % 7) as usize;
            speech_like(&format!("syn{i:04}"), i % 3, groups, s)
        })
        .collect()
}

/// Writes the utterances as WAV files under `dir/wav` and a manifest at `dir/manifest.jsonl`.
/// With `test_every = Some(k)`, every k-th block of three consecutive utterances is marked
/// `test` and the rest `train`; corpora from [`speech_corpus`] cycle through the classes, so
/// both sides stay balanced.
pub fn write_corpus(dir: &Path, utts: &[SynthUtterance], test_every: Option<usize>) -> Result<PathBuf, EvalError> {
    let wav_dir = dir.join("wav");
    std::fs::create_dir_all(&wav_dir)?;
    let names = ["Low", "Medium", "High"];
    let mut entries = Vec::new();
    for (i, u) in utts.iter().enumerate() {
        let rel = PathBuf::from("wav").join(format!("{}.wav", u.buffer.id));
        write_wav_i16(dir.join(&rel), &u.buffer).map_err(|e: AudioError| EvalError::Audio(e))?;
        entries.push(ManifestEntry {
            id: u.buffer.id.clone(),
            audio: rel,
            label: RawLabel::Name(names[u.label].to_string()),
            transcript: u.tokens.join(" "),
            word_times: Some(u.word_times.clone()),
            split: test_every.map(|k| if (i / 3) % k == k - 1 { Split::Test } else { Split::Train }),
        });
    }
    let path = dir.join("manifest.jsonl");
    write_manifest(std::fs::File::create(&path)?, &entries)?;
    Ok(path)
}

/// Chunk-level dataset where only source `informative` carries the class: its rows are a
/// class mean plus unit noise, every other source is unit noise. Markers are noise too.
pub fn informative_source_samples(
    n: usize,
    sources: usize,
    dim: usize,
    markers: usize,
    informative: usize,
    shift: f64,
    seed: u64,
) -> Vec<Sample> {
    let mut g = SplitMix64::new(seed);
    let means: Vec<Vec<f64>> = (0..3).map(|_| (0..dim).map(|_| shift * g.next_normal()).collect()).collect();
    (0..n)
        .map(|i| {
            let label = i % 3;
            let m = 2 + (g.next_u64() % 7) as usize;
            let sources = (0..sources)
                .map(|j| {
                    Array2::from_shape_fn((m, dim), |(_, c)| {
                        let noise = g.next_normal();
                        if j == informative {
                            means[label][c] + noise
                        } else {
                            noise
                        }
                    })
                })
                .collect();
            let markers = Array2::from_shape_simple_fn((m, markers), || g.next_normal());
            Sample { id: format!("s{i:04}"), label, input: UtteranceInput { sources, markers } }
        })
        .collect()
}
