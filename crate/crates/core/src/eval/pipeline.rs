//! Dataset preparation and the experiment / ablation runners.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{confusion_matrix, kfold_split, macro_f1, micro_f1, pearson, EvalError, Fold, ManifestEntry, Split};
use crate::audio::load_prepared;
use crate::embeddings::{mean_pool, project_to_common, slice_frames, EmbeddingError, EmbeddingSource, SSL_MODELS};
use crate::features::{utterance_markers, voice_quality, MARKER_NAMES};
use crate::model::{
    fingerprint_json, train, FusionMode, ModelConfig, Sample, TrainedModel, UtteranceInput, NUM_CLASSES,
};
use crate::par::{self, Execution};
use crate::rng::mix_seed;
use crate::segmentation::{
    chunk_breath_groups, detect_speech, whole_utterance_chunk, Chunk, SpeechRegion, VadConfig, DEFAULT_DELTA_MS,
};
use crate::AudioBuffer;

pub const VQ_MARKER_NAMES: [&str; 5] = ["f0_mean", "f0_std", "shimmer_pct", "hnr_db", "voiced_fraction"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Fixed split when every entry carries `split`, cross-validation otherwise.
    Auto,
    CrossValidation,
    FixedSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub vad: VadConfig,
    pub delta_ms: f64,
    pub chunking: bool,
    pub markers: bool,
    /// Append the voice-quality measures to the marker vector.
    pub vq_markers: bool,
    pub ngram_order: usize,
    pub protocol: Protocol,
    pub folds: usize,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            vad: VadConfig::default(),
            delta_ms: DEFAULT_DELTA_MS,
            chunking: true,
            markers: true,
            vq_markers: false,
            ngram_order: 2,
            protocol: Protocol::Auto,
            folds: 5,
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        self.vad.validate()?;
        self.vad.check_delta(self.delta_ms)?;
        self.model.validate()?;
        if self.ngram_order == 0 {
            return Err(EvalError::InvalidConfig("ngram_order must be positive".into()));
        }
        if self.protocol != Protocol::FixedSplit && self.folds < 2 {
            return Err(EvalError::InvalidConfig("cross-validation needs at least 2 folds".into()));
        }
        Ok(())
    }

    pub fn marker_names(&self) -> Vec<String> {
        let mut names: Vec<String> = MARKER_NAMES.iter().map(|s| s.to_string()).collect();
        if self.vq_markers {
            names.extend(VQ_MARKER_NAMES.iter().map(|s| s.to_string()));
        }
        names
    }

    pub fn fingerprint(&self, source: &EmbeddingSource) -> String {
        fingerprint_json(&serde_json::json!({ "config": self, "embeddings": describe_source(source) }))
    }
}

pub fn describe_source(source: &EmbeddingSource) -> String {
    match source {
        EmbeddingSource::FebDir(p) => format!("feb:{}", p.display()),
        EmbeddingSource::Mock { dim, seed } => format!("mock:{dim}:{seed}"),
    }
}

/// Optional external speech regions keyed by utterance id.
pub type RegionMap = BTreeMap<String, Vec<SpeechRegion>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedUtterance {
    pub id: String,
    pub reason: String,
}

/// One utterance ready for the classifier. `markers` holds raw (unstandardized) values.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedUtterance {
    pub id: String,
    pub label: usize,
    pub split: Option<Split>,
    pub chunks: Vec<Chunk>,
    pub input: UtteranceInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedCorpus {
    pub utterances: Vec<PreparedUtterance>,
    pub skipped: Vec<SkippedUtterance>,
    /// Chunks left out because some source had no frame centred inside them.
    pub dropped_chunks: usize,
    pub marker_names: Vec<String>,
}

impl PreparedCorpus {
    /// Copy with the marker columns removed.
    pub fn without_markers(&self) -> Self {
        let mut out = self.clone();
        for u in &mut out.utterances {
            u.input.markers = Array2::zeros((u.input.chunks(), 0));
        }
        out.marker_names.clear();
        out
    }

    pub fn samples(&self) -> Vec<Sample> {
        self.utterances.iter().map(|u| Sample { id: u.id.clone(), label: u.label, input: u.input.clone() }).collect()
    }
}

enum Prepared {
    Ready(PreparedUtterance, usize),
    Skipped(SkippedUtterance),
}

/// Chunks of one utterance; an empty list means no speech was found.
pub fn utterance_chunks(
    buf: &AudioBuffer,
    regions: Option<&RegionMap>,
    cfg: &ExperimentConfig,
    chunking: bool,
) -> Result<Vec<Chunk>, EvalError> {
    if !chunking {
        return Ok(if buf.samples.is_empty() { Vec::new() } else { vec![whole_utterance_chunk(buf)] });
    }
    let regions = match regions {
        Some(map) => match map.get(&buf.id) {
            Some(r) => r.clone(),
            None => {
                log::warn!("utterance {} missing from external VAD", buf.id);
                Vec::new()
            }
        },
        None => detect_speech(buf, &cfg.vad)?,
    };
    Ok(chunk_breath_groups(buf, &regions, cfg.delta_ms, &cfg.vad)?)
}

fn prepare_one(
    entry: &ManifestEntry,
    source: &EmbeddingSource,
    regions: Option<&RegionMap>,
    cfg: &ExperimentConfig,
    chunking: bool,
) -> Result<Prepared, EvalError> {
    let skip = |reason: &str| {
        log::warn!("skipping {}: {reason}", entry.id);
        Ok(Prepared::Skipped(SkippedUtterance { id: entry.id.clone(), reason: reason.to_string() }))
    };
    let mut buf = load_prepared(&entry.audio)?;
    buf.id = entry.id.clone();
    let label = entry.label.class()?.index();
    let chunks = utterance_chunks(&buf, regions, cfg, chunking)?;
    if chunks.is_empty() {
        return skip("no speech chunks");
    }
    let transcript = entry.transcript()?;
    let markers: Vec<Vec<f64>> =
        utterance_markers(&transcript, &chunks, (0.0, buf.duration_seconds()), cfg.ngram_order)
            .into_iter()
            .zip(&chunks)
            .map(|(m, c)| {
                let mut row = m.to_array().to_vec();
                if cfg.vq_markers {
                    row.extend(vq_row(&buf, c));
                }
                row
            })
            .collect();

    let frames = (0..SSL_MODELS.len())
        .map(|j| source.frames(&buf, j))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| EvalError::Embedding { id: entry.id.clone(), source: e })?;
    let mut pooled: Vec<Vec<Array1<f64>>> = vec![Vec::new(); SSL_MODELS.len()];
    let mut kept = Vec::new();
    for (i, chunk) in chunks.iter().enumerate() {
        let vectors: Result<Vec<_>, _> = frames.iter().map(|f| mean_pool(&slice_frames(f, chunk))).collect();
        match vectors {
            Ok(v) => {
                for (j, x) in v.into_iter().enumerate() {
                    pooled[j].push(x);
                }
                kept.push(i);
            }
            Err(EmbeddingError::EmptyChunkFrames) => {
                log::warn!(
                    "{}: chunk {i} [{:.3}, {:.3}) has no embedding frames; skipped",
                    entry.id,
                    chunk.start,
                    chunk.end
                );
            }
            Err(e) => return Err(EvalError::Embedding { id: entry.id.clone(), source: e }),
        }
    }
    let dropped = chunks.len() - kept.len();
    if kept.is_empty() {
        return skip("no chunk has embedding frames");
    }
    let target = frames.iter().map(|f| f.dim()).max().unwrap_or(0);
    let m = kept.len();
    let mut sources: Vec<Array2<f64>> = vec![Array2::zeros((m, target)); SSL_MODELS.len()];
    for r in 0..m {
        let row: Vec<Array1<f64>> = pooled.iter().map(|p| p[r].clone()).collect();
        let projected =
            project_to_common(&row, target).map_err(|e| EvalError::Embedding { id: entry.id.clone(), source: e })?;
        for (j, v) in projected.vectors.iter().enumerate() {
            sources[j].row_mut(r).assign(v);
        }
    }
    let k = markers[0].len();
    let marker_matrix = Array2::from_shape_fn((m, k), |(r, c)| markers[kept[r]][c]);
    let chunks: Vec<Chunk> = kept.iter().map(|&i| chunks[i].clone()).collect();
    Ok(Prepared::Ready(
        PreparedUtterance {
            id: entry.id.clone(),
            label,
            split: entry.split,
            chunks,
            input: UtteranceInput { sources, markers: marker_matrix },
        },
        dropped,
    ))
}

fn vq_row(buf: &AudioBuffer, chunk: &Chunk) -> [f64; 5] {
    match voice_quality(buf, chunk) {
        Ok(v) => [
            v.f0_mean.unwrap_or(0.0),
            v.f0_std.unwrap_or(0.0),
            v.shimmer_pct.unwrap_or(0.0),
            v.hnr_db.unwrap_or(0.0),
            v.voiced_fraction,
        ],
        Err(_) => [0.0; 5],
    }
}

/// Segments, measures and embeds every manifest entry.
pub fn prepare_corpus(
    entries: &[ManifestEntry],
    source: &EmbeddingSource,
    regions: Option<&RegionMap>,
    cfg: &ExperimentConfig,
    chunking: bool,
    exec: Execution,
) -> Result<PreparedCorpus, EvalError> {
    let results = par::map(exec, entries, |e| prepare_one(e, source, regions, cfg, chunking));
    let mut corpus = PreparedCorpus {
        utterances: Vec::new(),
        skipped: Vec::new(),
        dropped_chunks: 0,
        marker_names: cfg.marker_names(),
    };
    for r in results {
        match r? {
            Prepared::Ready(u, dropped) => {
                corpus.dropped_chunks += dropped;
                corpus.utterances.push(u);
            }
            Prepared::Skipped(s) => corpus.skipped.push(s),
        }
    }
    if let Some(first) = corpus.utterances.first() {
        let shape = first.input.shape();
        if let Some(bad) = corpus.utterances.iter().find(|u| u.input.shape() != shape) {
            return Err(EvalError::InvalidConfig(format!("embedding width of {} differs from {}", bad.id, first.id)));
        }
    }
    Ok(corpus)
}

/// One ablation arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub fusion: FusionMode,
    pub chunking: bool,
    pub markers: bool,
}

impl Condition {
    pub fn full(cfg: &ExperimentConfig) -> Self {
        Self { name: "full".into(), fusion: FusionMode::Learned, chunking: cfg.chunking, markers: cfg.markers }
    }

    /// Full model, each single source, no chunking, no markers.
    pub fn ablation_set(cfg: &ExperimentConfig) -> Vec<Self> {
        let mut out = vec![Self::full(cfg)];
        for (j, m) in SSL_MODELS.iter().enumerate() {
            out.push(Self {
                name: format!("single_{m}"),
                fusion: FusionMode::Fixed(j),
                chunking: cfg.chunking,
                markers: cfg.markers,
            });
        }
        out.push(Self {
            name: "no_chunking".into(),
            fusion: FusionMode::Learned,
            chunking: false,
            markers: cfg.markers,
        });
        out.push(Self {
            name: "no_markers".into(),
            fusion: FusionMode::Learned,
            chunking: cfg.chunking,
            markers: false,
        });
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: usize,
    pub predicted: usize,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub macro_f1: f64,
    pub micro_f1: f64,
    /// `None` when predictions or labels are constant.
    pub pcc: Option<f64>,
    pub alpha: Vec<f64>,
    pub confusion: Vec<Vec<usize>>,
    pub final_train_loss: Option<f64>,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTarget {
    pub dataset: String,
    pub macro_f1: f64,
    pub pcc: f64,
}

/// Published full-scale results of the fused, chunked system, kept for comparison only.
pub fn reference_targets() -> Vec<ReferenceTarget> {
    vec![
        ReferenceTarget { dataset: "speechocean762".into(), macro_f1: 0.825, pcc: 0.796 },
        ReferenceTarget { dataset: "avalinguo".into(), macro_f1: 0.969, pcc: 0.963 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub condition: Condition,
    pub protocol: Protocol,
    pub embeddings: String,
    /// `frozen-SSL` for extracted embeddings, `mock` for the mock embedder.
    pub embedding_mode: String,
    pub marker_names: Vec<String>,
    pub class_names: Vec<String>,
    pub folds: Vec<FoldResult>,
    /// Means over folds.
    pub macro_f1: f64,
    pub micro_f1: f64,
    /// Mean over the folds where the correlation is defined.
    pub pcc: Option<f64>,
    pub alpha: Vec<f64>,
    /// Sum of the fold confusion matrices, `[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub class_support: Vec<usize>,
    pub manifest_size: usize,
    pub evaluated: usize,
    pub skipped: Vec<SkippedUtterance>,
    pub dropped_chunks: usize,
    pub fingerprint: String,
    pub reference_targets: Vec<ReferenceTarget>,
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    /// The report with the wall-clock field zeroed, for reproducibility comparisons.
    pub fn without_runtime(&self) -> Self {
        Self { runtime_seconds: 0.0, ..self.clone() }
    }
}

/// Train/test index lists over `corpus.utterances`.
fn partitions(
    corpus: &PreparedCorpus,
    entries: &[ManifestEntry],
    cfg: &ExperimentConfig,
) -> Result<(Protocol, Vec<Fold>), EvalError> {
    let fixed = match cfg.protocol {
        Protocol::FixedSplit => true,
        Protocol::CrossValidation => false,
        Protocol::Auto => !entries.is_empty() && entries.iter().all(|e| e.split.is_some()),
    };
    let pos: BTreeMap<&str, usize> = corpus.utterances.iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect();
    if fixed {
        let pick = |s: Split| -> Vec<usize> {
            entries.iter().filter(|e| e.split == Some(s)).filter_map(|e| pos.get(e.id.as_str()).copied()).collect()
        };
        let (train, test) = (pick(Split::Train), pick(Split::Test));
        if train.is_empty() || test.is_empty() {
            return Err(EvalError::InvalidConfig("fixed split needs both train and test utterances".into()));
        }
        return Ok((Protocol::FixedSplit, vec![Fold { train, test }]));
    }
    // folds are drawn over the whole manifest so every condition sees the same split
    let labels = entries.iter().map(|e| e.label.class().map(|c| c.index())).collect::<Result<Vec<_>, _>>()?;
    let folds = kfold_split(&labels, cfg.folds, mix_seed(&[cfg.seed, 0xF01D]))?
        .into_iter()
        .map(|f| {
            let map = |v: Vec<usize>| v.into_iter().filter_map(|i| pos.get(entries[i].id.as_str()).copied()).collect();
            Fold { train: map(f.train), test: map(f.test) }
        })
        .collect();
    Ok((Protocol::CrossValidation, folds))
}

/// Predictions and metrics of `model` on `utterances`.
pub fn evaluate_model(
    model: &TrainedModel,
    utterances: &[&PreparedUtterance],
) -> Result<(Vec<Prediction>, FoldMetrics), EvalError> {
    let mut preds = Vec::with_capacity(utterances.len());
    for u in utterances {
        let (p, probs) = model.predict(&u.input)?;
        preds.push(Prediction { id: u.id.clone(), label: u.label, predicted: p, probabilities: probs.to_vec() });
    }
    let metrics = fold_metrics(&preds)?;
    Ok((preds, metrics))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldMetrics {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub pcc: Option<f64>,
    pub confusion: Vec<Vec<usize>>,
}

fn fold_metrics(preds: &[Prediction]) -> Result<FoldMetrics, EvalError> {
    let p: Vec<usize> = preds.iter().map(|x| x.predicted).collect();
    let l: Vec<usize> = preds.iter().map(|x| x.label).collect();
    Ok(FoldMetrics {
        macro_f1: macro_f1(&p, &l)?,
        micro_f1: micro_f1(&p, &l)?,
        pcc: pearson(&p, &l).ok(),
        confusion: confusion_matrix(&p, &l, NUM_CLASSES),
    })
}

fn run_fold(
    corpus: &PreparedCorpus,
    fold_index: usize,
    fold: &Fold,
    cfg: &ExperimentConfig,
    fusion: FusionMode,
    exec: Execution,
) -> Result<FoldResult, EvalError> {
    if fold.train.is_empty() || fold.test.is_empty() {
        return Err(EvalError::InvalidConfig(format!("fold {fold_index} has an empty side")));
    }
    let train_set: Vec<Sample> = fold
        .train
        .iter()
        .map(|&i| {
            let u = &corpus.utterances[i];
            Sample { id: u.id.clone(), label: u.label, input: u.input.clone() }
        })
        .collect();
    let model_cfg = ModelConfig { seed: mix_seed(&[cfg.seed, fold_index as u64]), ..cfg.model.clone() };
    let (model, history) = train(&train_set, &model_cfg, fusion, exec)?;
    let test: Vec<&PreparedUtterance> = fold.test.iter().map(|&i| &corpus.utterances[i]).collect();
    let (predictions, m) = evaluate_model(&model, &test)?;
    log::info!("fold {fold_index}: macro-F1 {:.4}", m.macro_f1);
    Ok(FoldResult {
        fold: fold_index,
        train_size: fold.train.len(),
        test_size: fold.test.len(),
        macro_f1: m.macro_f1,
        micro_f1: m.micro_f1,
        pcc: m.pcc,
        alpha: model.alpha().to_vec(),
        confusion: m.confusion,
        final_train_loss: history.last().map(|h| h.loss),
        predictions,
    })
}

/// Assembles a report from fold results.
#[allow(clippy::too_many_arguments)]
pub fn aggregate(
    condition: Condition,
    protocol: Protocol,
    folds: Vec<FoldResult>,
    corpus: &PreparedCorpus,
    manifest_size: usize,
    source: &EmbeddingSource,
    fingerprint: String,
    runtime_seconds: f64,
) -> ExperimentReport {
    let n = folds.len().max(1) as f64;
    let mean = |f: &dyn Fn(&FoldResult) -> f64| folds.iter().map(f).sum::<f64>() / n;
    let pccs: Vec<f64> = folds.iter().filter_map(|f| f.pcc).collect();
    let sources = folds.first().map_or(SSL_MODELS.len(), |f| f.alpha.len());
    let alpha = (0..sources).map(|j| mean(&|f| f.alpha[j])).collect();
    let mut confusion = vec![vec![0; NUM_CLASSES]; NUM_CLASSES];
    for f in &folds {
        for (r, row) in f.confusion.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                confusion[r][c] += v;
            }
        }
    }
    let class_support = confusion.iter().map(|r| r.iter().sum()).collect();
    let evaluated = corpus.utterances.len();
    ExperimentReport {
        protocol,
        embeddings: describe_source(source),
        embedding_mode: match source {
            EmbeddingSource::FebDir(_) => "frozen-SSL".into(),
            EmbeddingSource::Mock { .. } => "mock".into(),
        },
        marker_names: if condition.markers { corpus.marker_names.clone() } else { Vec::new() },
        class_names: vec!["Low".into(), "Medium".into(), "High".into()],
        macro_f1: mean(&|f| f.macro_f1),
        micro_f1: mean(&|f| f.micro_f1),
        pcc: (!pccs.is_empty()).then(|| pccs.iter().sum::<f64>() / pccs.len() as f64),
        alpha,
        confusion,
        class_support,
        manifest_size,
        evaluated,
        skipped: corpus.skipped.clone(),
        dropped_chunks: corpus.dropped_chunks,
        fingerprint,
        reference_targets: reference_targets(),
        runtime_seconds,
        condition,
        folds,
    }
}

/// Runs one condition on an already prepared corpus (markers are removed here when the
/// condition disables them).
pub fn run_condition(
    entries: &[ManifestEntry],
    corpus: &PreparedCorpus,
    source: &EmbeddingSource,
    cfg: &ExperimentConfig,
    condition: Condition,
    exec: Execution,
) -> Result<ExperimentReport, EvalError> {
    let started = Instant::now();
    let stripped;
    let corpus = if condition.markers {
        corpus
    } else {
        stripped = corpus.without_markers();
        &stripped
    };
    if corpus.utterances.is_empty() {
        return Err(EvalError::NothingToEvaluate);
    }
    let (protocol, folds) = partitions(corpus, entries, cfg)?;
    let results = par::map_range(exec, folds.len(), |i| run_fold(corpus, i, &folds[i], cfg, condition.fusion, exec))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let fingerprint = fingerprint_json(&serde_json::json!({
        "config": cfg,
        "condition": condition,
        "embeddings": describe_source(source),
    }));
    let manifest_size = entries.len();
    Ok(aggregate(
        condition,
        protocol,
        results,
        corpus,
        manifest_size,
        source,
        fingerprint,
        started.elapsed().as_secs_f64(),
    ))
}

/// Segments, embeds, trains and evaluates the full configuration.
pub fn run_experiment(
    entries: &[ManifestEntry],
    source: &EmbeddingSource,
    regions: Option<&RegionMap>,
    cfg: &ExperimentConfig,
    exec: Execution,
) -> Result<ExperimentReport, EvalError> {
    cfg.validate()?;
    let corpus = prepare_corpus(entries, source, regions, cfg, cfg.chunking, exec)?;
    run_condition(entries, &corpus, source, cfg, Condition::full(cfg), exec)
}

/// Runs every ablation arm on the same folds and seeds.
pub fn run_ablation(
    entries: &[ManifestEntry],
    source: &EmbeddingSource,
    regions: Option<&RegionMap>,
    cfg: &ExperimentConfig,
    exec: Execution,
) -> Result<Vec<ExperimentReport>, EvalError> {
    cfg.validate()?;
    let conditions = Condition::ablation_set(cfg);
    let mut corpora: BTreeMap<bool, PreparedCorpus> = BTreeMap::new();
    for c in &conditions {
        if let std::collections::btree_map::Entry::Vacant(e) = corpora.entry(c.chunking) {
            e.insert(prepare_corpus(entries, source, regions, cfg, c.chunking, exec)?);
        }
    }
    par::map(exec, &conditions, |c| run_condition(entries, &corpora[&c.chunking], source, cfg, c.clone(), exec))
        .into_iter()
        .collect()
}

pub const SUMMARY_CSV_HEADER: &str =
    "condition,protocol,folds,evaluated,skipped,macro_f1,micro_f1,pcc,alpha_wav2vec2,alpha_hubert,alpha_wavlm";

pub fn write_summary_csv(mut w: impl std::io::Write, reports: &[ExperimentReport]) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_CSV_HEADER}")?;
    for r in reports {
        let alpha: Vec<String> = r.alpha.iter().map(|a| format!("{a:.6}")).collect();
        writeln!(
            w,
            "{},{},{},{},{},{:.6},{:.6},{},{}",
            r.condition.name,
            match r.protocol {
                Protocol::FixedSplit => "fixed_split",
                _ => "cross_validation",
            },
            r.folds.len(),
            r.evaluated,
            r.skipped.len(),
            r.macro_f1,
            r.micro_f1,
            r.pcc.map(|p| format!("{p:.6}")).unwrap_or_default(),
            alpha.join(",")
        )?;
    }
    Ok(())
}

/// Utterance-level fused embeddings (chunk mean of `sum_j alpha_j f_j`) as
/// `utterance_id,label,<d floats>`.
pub fn write_embeddings_csv(mut w: impl std::io::Write, corpus: &PreparedCorpus, alpha: &[f64]) -> std::io::Result<()> {
    let Some(first) = corpus.utterances.first() else {
        return writeln!(w, "utterance_id,label");
    };
    let d = first.input.sources[0].ncols();
    let cols: Vec<String> = (0..d).map(|i| format!("e{i}")).collect();
    writeln!(w, "utterance_id,label,{}", cols.join(","))?;
    for u in &corpus.utterances {
        let mut v = Array1::<f64>::zeros(d);
        for (s, &a) in u.input.sources.iter().zip(alpha) {
            v.scaled_add(a, &s.mean_axis(ndarray::Axis(0)).expect("non-empty utterance"));
        }
        let vals: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
        writeln!(w, "{},{},{}", u.id, u.label, vals.join(","))?;
    }
    Ok(())
}
