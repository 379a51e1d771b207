//! Energy-based speech detection and breath-group chunking.
//!
//! Frames are `frame_ms` long and advance by `hop_ms`. Frame `j` owns the hop-wide time
//! cell centred on its centre, i.e. `[j*hop + off, (j+1)*hop + off)` with
//! `off = (frame - hop) / 2`. All region and chunk boundaries produced here lie on that grid,
//! except where a caller-supplied region edge is kept verbatim.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::par::{self, Execution};

/// Operating breath-group threshold.
pub const DEFAULT_DELTA_MS: f64 = 300.0;

/// Threshold set compared in the delta sweep.
pub const SWEEP_DELTAS_MS: [f64; 4] = [200.0, 250.0, 300.0, 350.0];

const SILENCE_DB: f64 = -200.0;
const NOISE_FLOOR_PERCENTILE: f64 = 0.10;

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("input of {duration_ms:.1} ms is shorter than one {frame_ms} ms frame")]
    TooShortInput { duration_ms: f64, frame_ms: f64 },
    #[error("delta of {delta_ms} ms must exceed bridge_ms = {bridge_ms} ms")]
    InvalidThreshold { delta_ms: f64, bridge_ms: f64 },
    #[error("invalid VAD configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed VAD JSON at line {line}: {msg}")]
    MalformedJson { line: usize, msg: String },
    #[error("overlapping regions for utterance {id}")]
    OverlappingRegions { id: String },
    #[error("negative timestamp for utterance {id}")]
    NegativeTimestamps { id: String },
    #[error("empty or inverted region [{start}, {end}) for utterance {id}")]
    EmptyRegion { id: String, start: f64, end: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeechRegion {
    pub start: f64,
    pub end: f64,
}

impl SpeechRegion {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// A breath-group span `[start, end)` in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub utterance_id: String,
    pub index: usize,
    pub start: f64,
    pub end: f64,
}

impl Chunk {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VadConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub energy_floor_db: f64,
    pub relative_threshold_db: f64,
    pub min_speech_ms: f64,
    pub bridge_ms: f64,
    /// Silences at least this long end a speech region. Shorter silences stay inside the
    /// region where breath-group chunking can see them. `0` disables region joining.
    pub region_gap_ms: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame_ms: 30.0,
            hop_ms: 10.0,
            energy_floor_db: -60.0,
            relative_threshold_db: 12.0,
            min_speech_ms: 100.0,
            bridge_ms: 100.0,
            region_gap_ms: 1000.0,
        }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        let bad = |m: &str| Err(SegmentationError::InvalidConfig(m.to_string()));
        if !(self.frame_ms > 0.0 && self.hop_ms > 0.0) {
            return bad("frame_ms and hop_ms must be positive");
        }
        if self.hop_ms > self.frame_ms {
            return bad("hop_ms must not exceed frame_ms");
        }
        if self.min_speech_ms < 0.0 || self.bridge_ms < 0.0 || self.region_gap_ms < 0.0 {
            return bad("durations must be non-negative");
        }
        Ok(())
    }

    pub fn check_delta(&self, delta_ms: f64) -> Result<(), SegmentationError> {
        if delta_ms.is_nan() || delta_ms <= self.bridge_ms {
            return Err(SegmentationError::InvalidThreshold { delta_ms, bridge_ms: self.bridge_ms });
        }
        Ok(())
    }

    fn grid_offset_s(&self) -> f64 {
        (self.frame_ms - self.hop_ms) / 2000.0
    }

    /// Start time of frame `j`'s cell.
    pub fn cell_start(&self, j: usize) -> f64 {
        j as f64 * self.hop_ms / 1000.0 + self.grid_offset_s()
    }

    pub fn frame_center(&self, j: usize) -> f64 {
        (j as f64 * self.hop_ms + self.frame_ms / 2.0) / 1000.0
    }

    /// Smallest frame count whose duration reaches `ms`.
    pub fn frames_for(&self, ms: f64) -> usize {
        (ms / self.hop_ms - 1e-9).ceil().max(0.0) as usize
    }

    /// Smallest count of consecutive non-speech frames that implies a silence of at least
    /// `ms`. A frame is silent only when its whole window is, so `n` silent frames span
    /// `n * hop + (frame - hop)` of true silence.
    pub fn gap_frames_for(&self, ms: f64) -> usize {
        self.frames_for(ms - (self.frame_ms - self.hop_ms)).max(1)
    }
}

/// Log-RMS energy (dBFS) of every analysis frame.
pub fn frame_energies_db(buf: &AudioBuffer, cfg: &VadConfig) -> Result<Vec<f64>, SegmentationError> {
    let sr = f64::from(buf.sample_rate);
    let frame = (cfg.frame_ms * sr / 1000.0).round() as usize;
    let hop = (cfg.hop_ms * sr / 1000.0).round() as usize;
    if frame == 0 || hop == 0 || buf.samples.len() < frame {
        return Err(SegmentationError::TooShortInput {
            duration_ms: buf.duration_seconds() * 1000.0,
            frame_ms: cfg.frame_ms,
        });
    }
    let count = (buf.samples.len() - frame) / hop + 1;
    Ok((0..count)
        .map(|j| {
            let w = &buf.samples[j * hop..j * hop + frame];
            let ms = w.iter().map(|&s| f64::from(s) * f64::from(s)).sum::<f64>() / frame as f64;
            if ms > 0.0 {
                (10.0 * ms.log10()).max(SILENCE_DB)
            } else {
                SILENCE_DB
            }
        })
        .collect())
}

/// `max(energy_floor_db, p10(energies) + relative_threshold_db)`.
pub fn speech_threshold_db(energies_db: &[f64], cfg: &VadConfig) -> f64 {
    if energies_db.is_empty() {
        return cfg.energy_floor_db;
    }
    let mut sorted = energies_db.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let idx = ((sorted.len() - 1) as f64 * NOISE_FLOOR_PERCENTILE).round() as usize;
    cfg.energy_floor_db.max(sorted[idx] + cfg.relative_threshold_db)
}

pub fn speech_flags(energies_db: &[f64], cfg: &VadConfig) -> Vec<bool> {
    let thr = speech_threshold_db(energies_db, cfg);
    energies_db.iter().map(|&e| e > thr).collect()
}

/// Maximal runs of `true` as half-open frame ranges.
fn runs(flags: &[bool], lo: usize, hi: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut j = lo;
    while j < hi {
        if flags[j] {
            let s = j;
            while j < hi && flags[j] {
                j += 1;
            }
            out.push((s, j));
        } else {
            j += 1;
        }
    }
    out
}

/// Speech regions as frame ranges: bridge short gaps, drop short runs, then join runs
/// separated by less than `region_gap_ms`.
pub fn detect_speech_frames(flags: &[bool], cfg: &VadConfig) -> Vec<(usize, usize)> {
    let bridge = cfg.gap_frames_for(cfg.bridge_ms);
    let min_len = cfg.frames_for(cfg.min_speech_ms);
    let region_gap = if cfg.region_gap_ms > 0.0 { cfg.gap_frames_for(cfg.region_gap_ms) } else { 0 };

    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in runs(flags, 0, flags.len()) {
        match merged.last_mut() {
            Some(last) if s - last.1 < bridge => last.1 = e,
            _ => merged.push((s, e)),
        }
    }
    merged.retain(|&(s, e)| e - s >= min_len);

    let mut regions: Vec<(usize, usize)> = Vec::new();
    for (s, e) in merged {
        match regions.last_mut() {
            Some(last) if s - last.1 < region_gap => last.1 = e,
            _ => regions.push((s, e)),
        }
    }
    regions
}

/// Energy voice-activity detection.
pub fn detect_speech(buf: &AudioBuffer, cfg: &VadConfig) -> Result<Vec<SpeechRegion>, SegmentationError> {
    cfg.validate()?;
    let energies = frame_energies_db(buf, cfg)?;
    let flags = speech_flags(&energies, cfg);
    let dur = buf.duration_seconds();
    Ok(detect_speech_frames(&flags, cfg)
        .into_iter()
        .map(|(s, e)| SpeechRegion::new(cfg.cell_start(s).max(0.0), cfg.cell_start(e).min(dur)))
        .collect())
}

/// Checks ordering, sign, and overlap; sorts by start.
pub fn validate_regions(id: &str, regions: &mut [SpeechRegion]) -> Result<(), SegmentationError> {
    for r in regions.iter() {
        if r.start < 0.0 || r.end < 0.0 {
            return Err(SegmentationError::NegativeTimestamps { id: id.to_string() });
        }
        if !r.start.is_finite() || !r.end.is_finite() || r.start >= r.end {
            return Err(SegmentationError::EmptyRegion { id: id.to_string(), start: r.start, end: r.end });
        }
    }
    regions.sort_by(|a, b| a.start.total_cmp(&b.start));
    if regions.windows(2).any(|w| w[1].start < w[0].end) {
        return Err(SegmentationError::OverlappingRegions { id: id.to_string() });
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VadLine {
    id: String,
    regions: Vec<SpeechRegion>,
}

/// Parses VAD-JSON lines (`{"id": ..., "regions": [{"start": s, "end": e}, ...]}`).
pub fn parse_external_vad(reader: impl BufRead) -> Result<BTreeMap<String, Vec<SpeechRegion>>, SegmentationError> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parsed: VadLine = serde_json::from_str(&line)
            .map_err(|e| SegmentationError::MalformedJson { line: i + 1, msg: e.to_string() })?;
        validate_regions(&parsed.id, &mut parsed.regions)?;
        if parsed.regions.is_empty() {
            log::warn!("utterance {} has no speech regions in external VAD", parsed.id);
        }
        out.insert(parsed.id, parsed.regions);
    }
    Ok(out)
}

pub fn load_external_vad(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<SpeechRegion>>, SegmentationError> {
    let f = std::fs::File::open(path)?;
    parse_external_vad(std::io::BufReader::new(f))
}

/// Splits the frame range `[lo, hi)` at internal non-speech runs of at least `min_gap`
/// frames. A gap only becomes a boundary when the speech run right after it is at least
/// `min_run` frames and the span from `lo` to the gap is at least `min_run` frames; short
/// fragments therefore stay attached to the preceding chunk. Returns the chunk frame
/// ranges; the splitting gaps belong to no chunk.
pub fn split_frames(flags: &[bool], lo: usize, hi: usize, min_gap: usize, min_run: usize) -> Vec<(usize, usize)> {
    let speech = runs(flags, lo, hi);
    if speech.is_empty() {
        return if lo < hi { vec![(lo, hi)] } else { Vec::new() };
    }
    let mut chunks = Vec::new();
    let mut chunk_start = lo;
    for pair in speech.windows(2) {
        let (prev, next) = (pair[0], pair[1]);
        let gap = next.0 - prev.1;
        if gap >= min_gap && next.1 - next.0 >= min_run && prev.1 - lo >= min_run {
            chunks.push((chunk_start, prev.1));
            chunk_start = next.0;
        }
    }
    chunks.push((chunk_start, hi));
    chunks
}

/// Frame range whose centres fall in `[start, end)`.
fn region_frames(region: &SpeechRegion, n_frames: usize, cfg: &VadConfig) -> (usize, usize) {
    let to_index = |t: f64| -> usize {
        // first j with centre >= t
        let x = (t * 1000.0 - cfg.frame_ms / 2.0) / cfg.hop_ms;
        (x - 1e-9).ceil().clamp(0.0, n_frames as f64) as usize
    };
    (to_index(region.start), to_index(region.end))
}

/// Chunks an utterance given its frame energies.
pub fn chunk_from_energies(
    utterance_id: &str,
    energies_db: &[f64],
    regions: &[SpeechRegion],
    delta_ms: f64,
    cfg: &VadConfig,
) -> Result<Vec<Chunk>, SegmentationError> {
    cfg.validate()?;
    cfg.check_delta(delta_ms)?;
    let flags = speech_flags(energies_db, cfg);
    let min_gap = cfg.gap_frames_for(delta_ms);
    let min_run = cfg.frames_for(cfg.min_speech_ms);
    let mut chunks = Vec::new();
    for region in regions {
        let (lo, hi) = region_frames(region, flags.len(), cfg);
        if lo >= hi {
            // region narrower than the frame grid resolution: keep it whole
            chunks.push((region.start, region.end));
            continue;
        }
        let parts = split_frames(&flags, lo, hi, min_gap, min_run);
        let last = parts.len() - 1;
        for (i, (s, e)) in parts.into_iter().enumerate() {
            let start = if i == 0 { region.start } else { cfg.cell_start(s).max(region.start) };
            let end = if i == last { region.end } else { cfg.cell_start(e).min(region.end) };
            chunks.push((start, end));
        }
    }
    Ok(chunks
        .into_iter()
        .enumerate()
        .map(|(index, (start, end))| Chunk { utterance_id: utterance_id.to_string(), index, start, end })
        .collect())
}

/// Breath-group chunking of each region at internal silences of at least `delta_ms`.
pub fn chunk_breath_groups(
    buf: &AudioBuffer,
    regions: &[SpeechRegion],
    delta_ms: f64,
    cfg: &VadConfig,
) -> Result<Vec<Chunk>, SegmentationError> {
    cfg.check_delta(delta_ms)?;
    let energies = frame_energies_db(buf, cfg)?;
    chunk_from_energies(&buf.id, &energies, regions, delta_ms, cfg)
}

/// The whole utterance as a single chunk (the no-chunking ablation).
pub fn whole_utterance_chunk(buf: &AudioBuffer) -> Chunk {
    Chunk { utterance_id: buf.id.clone(), index: 0, start: 0.0, end: buf.duration_seconds() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkStats {
    pub delta_ms: f64,
    pub utterances: usize,
    pub chunk_count: usize,
    pub mean_duration: f64,
    pub std_duration: f64,
    /// Counts of silent gaps between consecutive chunks of the same utterance, in
    /// 100 ms bins; the last bin collects everything at or above 1 s.
    pub gap_histogram: Vec<usize>,
    /// Chunk count per utterance, in input order.
    pub per_utterance: Vec<usize>,
}

pub const GAP_BIN_MS: f64 = 100.0;
pub const GAP_BINS: usize = 11;

pub fn chunk_stats(delta_ms: f64, per_utt: &[Vec<Chunk>]) -> ChunkStats {
    let durations: Vec<f64> = per_utt.iter().flatten().map(Chunk::duration).collect();
    let n = durations.len();
    let mean = if n > 0 { durations.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let std = if n > 0 { (durations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64).sqrt() } else { 0.0 };
    let mut hist = vec![0; GAP_BINS];
    for chunks in per_utt {
        for w in chunks.windows(2) {
            let gap_ms = (w[1].start - w[0].end).max(0.0) * 1000.0;
            let bin = ((gap_ms / GAP_BIN_MS) as usize).min(GAP_BINS - 1);
            hist[bin] += 1;
        }
    }
    ChunkStats {
        delta_ms,
        utterances: per_utt.len(),
        chunk_count: n,
        mean_duration: mean,
        std_duration: std,
        gap_histogram: hist,
        per_utterance: per_utt.iter().map(Vec::len).collect(),
    }
}

/// Chunking statistics for each threshold in `deltas_ms`.
pub fn sweep_delta(
    buffers: &[AudioBuffer],
    regions: &[Vec<SpeechRegion>],
    deltas_ms: &[f64],
    cfg: &VadConfig,
    exec: Execution,
) -> Result<Vec<ChunkStats>, SegmentationError> {
    if deltas_ms.is_empty() {
        return Err(SegmentationError::InvalidConfig("no thresholds to sweep".into()));
    }
    assert_eq!(buffers.len(), regions.len(), "one region list per buffer");
    let energies = par::map(exec, buffers, |b| frame_energies_db(b, cfg)).into_iter().collect::<Result<Vec<_>, _>>()?;
    deltas_ms
        .iter()
        .map(|&delta| {
            let per_utt = par::map_range(exec, buffers.len(), |i| {
                chunk_from_energies(&buffers[i].id, &energies[i], &regions[i], delta, cfg)
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
            Ok(chunk_stats(delta, &per_utt))
        })
        .collect()
}

/// Chunk CSV: `utterance_id,index,start,end`.
pub fn write_chunks_csv(mut w: impl std::io::Write, chunks: &[Chunk]) -> std::io::Result<()> {
    writeln!(w, "utterance_id,index,start,end")?;
    for c in chunks {
        writeln!(w, "{},{},{:.6},{:.6}", c.utterance_id, c.index, c.start, c.end)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SR: u32 = 16_000;

    fn noise(n: usize, amp: f32, seed: u64) -> Vec<f32> {
        let mut g = crate::rng::SplitMix64::new(seed);
        (0..n).map(|_| amp * (2.0 * g.next_f64() as f32 - 1.0)).collect()
    }

    /// Alternating (silence_ms, speech_ms, ...) pattern of zeros and noise.
    fn pattern(segments: &[(bool, f64)]) -> AudioBuffer {
        let mut s = Vec::new();
        for (i, &(speech, ms)) in segments.iter().enumerate() {
            let n = (ms * f64::from(SR) / 1000.0).round() as usize;
            if speech {
                s.extend(noise(n, 0.5, i as u64 + 1));
            } else {
                s.extend(std::iter::repeat_n(0.0, n));
            }
        }
        AudioBuffer::new("u", s, SR)
    }

    #[test]
    fn silence_has_no_speech() {
        let b = AudioBuffer::new("z", vec![0.0; SR as usize], SR);
        assert!(detect_speech(&b, &VadConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn too_short_input() {
        let b = AudioBuffer::new("z", vec![0.0; 100], SR);
        assert!(matches!(detect_speech(&b, &VadConfig::default()), Err(SegmentationError::TooShortInput { .. })));
    }

    #[test]
    fn bracketed_noise_is_one_region() {
        let b = pattern(&[(false, 500.0), (true, 1000.0), (false, 500.0)]);
        let cfg = VadConfig::default();
        let regions = detect_speech(&b, &cfg).unwrap();

        // independent scan: first and last frame that overlaps any noise sample
        let energies = frame_energies_db(&b, &cfg).unwrap();
        let thr = speech_threshold_db(&energies, &cfg);
        let first = energies.iter().position(|&e| e > thr).unwrap();
        let last = energies.iter().rposition(|&e| e > thr).unwrap();
        let hop = cfg.hop_ms / 1000.0;
        assert_eq!(regions.len(), 1);
        assert!((regions[0].start - cfg.cell_start(first)).abs() < 1e-12);
        assert!((regions[0].end - cfg.cell_start(last + 1)).abs() < 1e-12);
        assert!((regions[0].start - 0.5).abs() <= 2.0 * hop + 1e-9, "{:?}", regions);
        assert!((regions[0].end - 1.5).abs() <= 2.0 * hop + 1e-9, "{:?}", regions);
    }

    #[test]
    fn short_gap_is_bridged() {
        let b = pattern(&[(false, 300.0), (true, 400.0), (false, 50.0), (true, 400.0), (false, 300.0)]);
        let cfg = VadConfig { region_gap_ms: 0.0, ..VadConfig::default() };
        let regions = detect_speech(&b, &cfg).unwrap();
        assert_eq!(regions.len(), 1, "{regions:?}");
        // without bridging the same signal has two runs
        let flags = speech_flags(&frame_energies_db(&b, &cfg).unwrap(), &cfg);
        assert_eq!(runs(&flags, 0, flags.len()).len(), 2);
    }

    #[test]
    fn short_blips_are_dropped() {
        let b = pattern(&[(false, 300.0), (true, 40.0), (false, 600.0), (true, 400.0), (false, 300.0)]);
        let cfg = VadConfig { region_gap_ms: 0.0, ..VadConfig::default() };
        let regions = detect_speech(&b, &cfg).unwrap();
        assert_eq!(regions.len(), 1);
        assert!(regions[0].start > 0.9);
    }

    #[test]
    fn external_vad_parsing() {
        let ok = r#"{"id":"u1","regions":[{"start":0.0,"end":1.0}]}"#;
        let m = parse_external_vad(ok.as_bytes()).unwrap();
        assert_eq!(m["u1"], vec![SpeechRegion::new(0.0, 1.0)]);

        let overlap = r#"{"id":"u1","regions":[{"start":0,"end":1},{"start":0.5,"end":1.5}]}"#;
        assert!(matches!(parse_external_vad(overlap.as_bytes()), Err(SegmentationError::OverlappingRegions { .. })));

        let empty = r#"{"id":"u2","regions":[]}"#;
        assert!(parse_external_vad(empty.as_bytes()).unwrap()["u2"].is_empty());

        let neg = r#"{"id":"u3","regions":[{"start":-0.1,"end":1.0}]}"#;
        assert!(matches!(parse_external_vad(neg.as_bytes()), Err(SegmentationError::NegativeTimestamps { .. })));

        assert!(matches!(
            parse_external_vad("{not json".as_bytes()),
            Err(SegmentationError::MalformedJson { line: 1, .. })
        ));
    }

    #[test]
    fn region_without_gap_is_one_chunk() {
        let b = pattern(&[(false, 200.0), (true, 1000.0), (false, 200.0)]);
        let region = SpeechRegion::new(0.2, 1.2);
        let chunks = chunk_breath_groups(&b, &[region], 300.0, &VadConfig::default()).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!((chunks[0].start, chunks[0].end), (0.2, 1.2));
    }

    #[test]
    fn single_internal_silence_splits_by_delta() {
        let b = pattern(&[(false, 200.0), (true, 800.0), (false, 400.0), (true, 800.0), (false, 200.0)]);
        let region = [SpeechRegion::new(0.2, 2.2)];
        let cfg = VadConfig::default();
        // oracle: the detected gap is the run of frames lying fully inside the silence
        let energies = frame_energies_db(&b, &cfg).unwrap();
        let flags = speech_flags(&energies, &cfg);
        let (lo, hi) = region_frames(&region[0], flags.len(), &cfg);
        let silent = flags[lo..hi].iter().filter(|f| !**f).count();
        assert_eq!(silent as f64 * cfg.hop_ms, 380.0);

        let at = |d| chunk_breath_groups(&b, &region, d, &cfg).unwrap().len();
        assert_eq!(at(300.0), 2);
        assert_eq!(at(500.0), 1);
    }

    #[test]
    fn invalid_threshold() {
        let b = pattern(&[(true, 500.0)]);
        let r = [SpeechRegion::new(0.0, 0.5)];
        assert!(matches!(
            chunk_breath_groups(&b, &r, 50.0, &VadConfig::default()),
            Err(SegmentationError::InvalidThreshold { .. })
        ));
        assert!(chunk_breath_groups(&b, &r, 100.0, &VadConfig::default()).is_err());
    }

    #[test]
    fn short_fragment_after_pause_stays_with_previous_chunk() {
        let mut f = vec![true; 50];
        f.extend(vec![false; 40]);
        f.extend(vec![true; 5]); // 50 ms fragment
        f.extend(vec![false; 40]);
        f.extend(vec![true; 50]);
        let parts = split_frames(&f, 0, f.len(), 30, 10);
        assert_eq!(parts, vec![(0, 95), (135, 185)]);
    }

    proptest! {
        #[test]
        fn chunks_stay_inside_regions_and_are_monotone(
            segs in prop::collection::vec((1usize..60, 1usize..60), 1..30),
            deltas in Just([150.0, 200.0, 250.0, 300.0, 350.0, 500.0]),
        ) {
            let cfg = VadConfig::default();
            let mut e = Vec::new();
            for (sp, sil) in &segs {
                e.extend(std::iter::repeat_n(-10.0, *sp));
                e.extend(std::iter::repeat_n(-200.0, *sil));
            }
            let region = SpeechRegion::new(0.0, cfg.cell_start(e.len()));
            let mut prev = usize::MAX;
            for d in deltas {
                let ch = chunk_from_energies("p", &e, &[region], d, &cfg).unwrap();
                prop_assert!(ch.len() <= prev);
                prev = ch.len();
                for c in &ch {
                    prop_assert!(c.start < c.end);
                    prop_assert!(c.start >= region.start && c.end <= region.end);
                }
                for w in ch.windows(2) {
                    prop_assert!(w[0].end <= w[1].start);
                }
            }
        }
    }
}
