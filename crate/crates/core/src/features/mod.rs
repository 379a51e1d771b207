//! Chunk-level fluency markers and voice-quality analysis.

mod markers;
mod voice;

pub use markers::{
    articulation_rate, assign_words, assign_words_to_chunk, ngram_repetition, pause_duration, speech_rate,
    syllable_count, FluencyMarkers, MarkerStats, Transcript, MARKER_COUNT, MARKER_NAMES,
};
pub use voice::{voice_quality, VoiceQuality, VoiceQualityError};

use crate::segmentation::Chunk;

/// Marker rows for every chunk of one utterance.
pub fn utterance_markers(
    transcript: &Transcript,
    chunks: &[Chunk],
    utterance_span: (f64, f64),
    ngram_order: usize,
) -> Vec<FluencyMarkers> {
    let words = assign_words(transcript, chunks);
    chunks
        .iter()
        .zip(&words)
        .enumerate()
        .map(|(i, (chunk, words))| FluencyMarkers {
            speech_rate: speech_rate(words.len(), chunk),
            pause_duration: pause_duration(chunks, i, utterance_span),
            articulation_rate: articulation_rate(words, chunk),
            ngram_repetition: ngram_repetition(words, ngram_order),
        })
        .collect()
}

/// One row of the feature CSV.
#[derive(Debug, Clone)]
pub struct FeatureRow {
    pub utterance_id: String,
    pub chunk_index: usize,
    pub markers: FluencyMarkers,
    pub voice: Option<VoiceQuality>,
}

pub const FEATURE_CSV_HEADER: &str = "utterance_id,chunk_index,speech_rate,pause_duration,articulation_rate,ngram_repetition,f0_mean,f0_std,shimmer_pct,hnr_db,voiced_fraction";

pub fn write_features_csv(mut w: impl std::io::Write, rows: &[FeatureRow]) -> std::io::Result<()> {
    writeln!(w, "{FEATURE_CSV_HEADER}")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in rows {
        let m = &r.markers;
        let (f0m, f0s, sh, hnr, vf) = match &r.voice {
            Some(v) => {
                (opt(v.f0_mean), opt(v.f0_std), opt(v.shimmer_pct), opt(v.hnr_db), format!("{:.6}", v.voiced_fraction))
            }
            None => Default::default(),
        };
        writeln!(
            w,
            "{},{},{:.6},{:.6},{:.6},{:.6},{f0m},{f0s},{sh},{hnr},{vf}",
            r.utterance_id, r.chunk_index, m.speech_rate, m.pause_duration, m.articulation_rate, m.ngram_repetition
        )?;
    }
    Ok(())
}
