use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::segmentation::Chunk;

pub const MARKER_COUNT: usize = 4;
pub const MARKER_NAMES: [&str; MARKER_COUNT] =
    ["speech_rate", "pause_duration", "articulation_rate", "ngram_repetition"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub tokens: Vec<String>,
    /// Optional `(start, end)` seconds per token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_times: Option<Vec<(f64, f64)>>,
}

impl Transcript {
    pub fn from_text(text: &str) -> Self {
        Self { tokens: text.split_whitespace().map(str::to_string).collect(), word_times: None }
    }

    pub fn timed(tokens: Vec<String>, times: Vec<(f64, f64)>) -> Self {
        Self { tokens, word_times: Some(times) }
    }

    pub fn is_valid(&self) -> bool {
        match &self.word_times {
            None => true,
            Some(t) => t.len() == self.tokens.len() && t.windows(2).all(|w| w[0].0 <= w[1].0),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FluencyMarkers {
    pub speech_rate: f64,
    pub pause_duration: f64,
    pub articulation_rate: f64,
    pub ngram_repetition: f64,
}

impl FluencyMarkers {
    pub fn to_array(self) -> [f64; MARKER_COUNT] {
        [self.speech_rate, self.pause_duration, self.articulation_rate, self.ngram_repetition]
    }
}

/// Distributes tokens over chunks.
///
/// Timed tokens go to the chunk containing their midpoint (tokens falling in a pause are
/// dropped). Untimed tokens are dealt out in order, in proportion to chunk duration, with
/// largest-remainder rounding; equal remainders favour the larger quota, then the earlier
/// chunk.
pub fn assign_words(tr: &Transcript, chunks: &[Chunk]) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new(); chunks.len()];
    if chunks.is_empty() || tr.tokens.is_empty() {
        return out;
    }
    match &tr.word_times {
        Some(times) if times.len() == tr.tokens.len() => {
            for (tok, (s, e)) in tr.tokens.iter().zip(times) {
                let mid = (s + e) / 2.0;
                if let Some(i) = chunks.iter().position(|c| mid >= c.start && mid < c.end) {
                    out[i].push(tok.clone());
                }
            }
        }
        _ => {
            let counts = largest_remainder(tr.tokens.len(), &chunks.iter().map(Chunk::duration).collect::<Vec<_>>());
            let mut it = tr.tokens.iter();
            for (slot, n) in out.iter_mut().zip(counts) {
                slot.extend(it.by_ref().take(n).cloned());
            }
        }
    }
    out
}

/// Tokens of `chunk` within an utterance whose chunks are `all_chunks`.
pub fn assign_words_to_chunk(tr: &Transcript, all_chunks: &[Chunk], chunk_index: usize) -> Vec<String> {
    assign_words(tr, all_chunks).swap_remove(chunk_index)
}

fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        let mut v = vec![0; weights.len()];
        v[0] = total;
        return v;
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(quotas[b].total_cmp(&quotas[a])).then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Words per second.
pub fn speech_rate(words: usize, chunk: &Chunk) -> f64 {
    let d = chunk.duration();
    if d <= 0.0 {
        return 0.0;
    }
    words as f64 / d
}

/// Mean of the silence before and after chunk `i`; edge chunks use the gap to the
/// utterance boundary.
pub fn pause_duration(chunks: &[Chunk], i: usize, utterance_span: (f64, f64)) -> f64 {
    let before = if i == 0 { chunks[i].start - utterance_span.0 } else { chunks[i].start - chunks[i - 1].end };
    let after =
        if i + 1 == chunks.len() { utterance_span.1 - chunks[i].end } else { chunks[i + 1].start - chunks[i].end };
    (before.max(0.0) + after.max(0.0)) / 2.0
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Orthographic syllable estimate: maximal vowel-letter groups, at least one per word, with
/// a lone final `e` ignored when another vowel group exists.
pub fn syllable_count(word: &str) -> usize {
    let w: Vec<char> = word.to_lowercase().chars().filter(|c| c.is_alphabetic()).collect();
    if w.is_empty() {
        return 0;
    }
    let mut groups = 0;
    let mut prev = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    let n = w.len();
    let lone_final_e = n >= 2 && w[n - 1] == 'e' && !is_vowel(w[n - 2]);
    if lone_final_e && groups > 1 {
        groups -= 1;
    }
    groups.max(1)
}

/// Syllables per second of chunk time.
pub fn articulation_rate(words: &[String], chunk: &Chunk) -> f64 {
    let d = chunk.duration();
    if d <= 0.0 {
        return 0.0;
    }
    words.iter().map(|w| syllable_count(w)).sum::<usize>() as f64 / d
}

/// Share of n-gram occurrences that repeat an earlier n-gram (case-folded).
pub fn ngram_repetition(tokens: &[String], n: usize) -> f64 {
    assert!(n >= 1, "n-gram order must be positive");
    if tokens.len() < n {
        return 0.0;
    }
    let folded: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut seen: HashSet<&[String]> = HashSet::new();
    let mut total = 0usize;
    let mut repeats = 0usize;
    for g in folded.windows(n) {
        total += 1;
        if !seen.insert(g) {
            repeats += 1;
        }
    }
    repeats as f64 / total.max(1) as f64
}

/// Per-feature mean and standard deviation fitted on a training fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl MarkerStats {
    pub fn identity(k: usize) -> Self {
        Self { mean: vec![0.0; k], std: vec![1.0; k] }
    }

    /// Population statistics over `rows`, each of width `k`.
    pub fn fit<'a>(k: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; k];
        let mut sq = vec![0.0; k];
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        for r in &rows {
            n += 1;
            for j in 0..k {
                sum[j] += r[j];
            }
        }
        if n == 0 {
            return Self::identity(k);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for r in &rows {
            for j in 0..k {
                sq[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let std = sq.iter().map(|s| (s / n as f64).sqrt()).collect();
        Self { mean, std }
    }

    /// `(x - mean) / std`, or 0 where `std == 0`.
    pub fn apply(&self, row: &mut [f64]) {
        for (j, x) in row.iter_mut().enumerate() {
            *x = if self.std[j] > 0.0 { (*x - self.mean[j]) / self.std[j] } else { 0.0 };
        }
    }
}
