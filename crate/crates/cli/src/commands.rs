use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use fluency_core::audio::load_prepared;
use fluency_core::embeddings::SSL_MODELS;
use fluency_core::eval::{
    aggregate, evaluate_model, load_manifest, prepare_corpus, run_ablation, run_condition, run_experiment,
    utterance_chunks, write_embeddings_csv, write_summary_csv, Condition, ExperimentConfig, FoldResult, ManifestEntry,
    PreparedUtterance, Protocol, RegionMap, Split,
};
use fluency_core::features::{utterance_markers, voice_quality, write_features_csv, FeatureRow};
use fluency_core::model::{load_checkpoint, save_checkpoint, train, FusionMode};
use fluency_core::par::{self, Execution};
use fluency_core::segmentation::{chunk_stats, load_external_vad, write_chunks_csv, ChunkStats};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::Command;

const EXEC: Execution = Execution::Parallel;
const PIPELINE_FILE: &str = "pipeline.json";

pub fn run(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    let entries = load_manifest(&cmd.pipeline().manifest)
        .with_context(|| format!("reading manifest {}", cmd.pipeline().manifest.display()))?;
    let regions = match &cfg.vad_json {
        Some(p) => Some(load_external_vad(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let regions = regions.as_ref();
    match cmd {
        Command::Segment { out, stats, .. } => segment(&entries, regions, cfg, out, stats.as_deref()),
        Command::Features { out, .. } => features(&entries, regions, cfg, out),
        Command::Train { out, .. } => train_cmd(&entries, regions, cfg, out),
        Command::Eval { checkpoint: Some(dir), out, .. } => eval_checkpoint(&entries, regions, dir, out),
        Command::Eval { checkpoint: None, out, .. } => {
            let report = run_experiment(&entries, &cfg.source(), regions, &cfg.experiment(), EXEC)?;
            write_json(out, &report)
        }
        Command::Sweep { deltas, chunks_only, out, .. } => sweep(&entries, regions, cfg, deltas, *chunks_only, out),
        Command::Ablate { out, .. } => {
            let reports = run_ablation(&entries, &cfg.source(), regions, &cfg.experiment(), EXEC)?;
            std::fs::create_dir_all(out)?;
            write_json(&out.join("reports.json"), &reports)?;
            write_summary_csv(create(&out.join("summary.csv"))?, &reports)?;
            Ok(())
        }
        Command::ExportEmbeddings { checkpoint, out, .. } => export(&entries, regions, cfg, checkpoint.as_deref(), out),
    }
}

fn create(path: &Path) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(std::io::stdout().lock()));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn chunk_all(
    entries: &[ManifestEntry],
    regions: Option<&RegionMap>,
    exp: &ExperimentConfig,
) -> Result<Vec<(fluency_core::AudioBuffer, Vec<fluency_core::Chunk>)>> {
    par::map(EXEC, entries, |e| -> Result<_> {
        let mut buf = load_prepared(&e.audio).with_context(|| format!("loading {}", e.audio.display()))?;
        buf.id = e.id.clone();
        let chunks = utterance_chunks(&buf, regions, exp, exp.chunking)?;
        if chunks.is_empty() {
            log::warn!("{}: no speech chunks", e.id);
        }
        Ok((buf, chunks))
    })
    .into_iter()
    .collect()
}

fn segment(
    entries: &[ManifestEntry],
    regions: Option<&RegionMap>,
    cfg: &RunConfig,
    out: &Path,
    stats: Option<&Path>,
) -> Result<()> {
    let exp = cfg.experiment();
    let done = chunk_all(entries, regions, &exp)?;
    let all: Vec<_> = done.iter().flat_map(|(_, c)| c.iter().cloned()).collect();
    let mut w = create(out)?;
    write_chunks_csv(&mut w, &all)?;
    w.flush()?;
    if let Some(p) = stats {
        let per_utt: Vec<_> = done.into_iter().map(|(_, c)| c).collect();
        write_json(p, &chunk_stats(exp.delta_ms, &per_utt))?;
    }
    Ok(())
}

fn features(entries: &[ManifestEntry], regions: Option<&RegionMap>, cfg: &RunConfig, out: &Path) -> Result<()> {
    let exp = cfg.experiment();
    let done = chunk_all(entries, regions, &exp)?;
    let rows = par::map_range(EXEC, entries.len(), |i| -> Result<Vec<FeatureRow>> {
        let (buf, chunks) = &done[i];
        let transcript = entries[i].transcript()?;
        let markers = utterance_markers(&transcript, chunks, (0.0, buf.duration_seconds()), exp.ngram_order);
        Ok(chunks
            .iter()
            .zip(markers)
            .map(|(c, m)| FeatureRow {
                utterance_id: c.utterance_id.clone(),
                chunk_index: c.index,
                markers: m,
                voice: voice_quality(buf, c).ok(),
            })
            .collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut w = create(out)?;
    write_features_csv(&mut w, &rows.concat())?;
    w.flush()?;
    Ok(())
}

/// Entries of `split` when the manifest marks splits, otherwise all of them.
fn select_split(entries: &[ManifestEntry], split: Split) -> Vec<ManifestEntry> {
    let marked = entries.iter().any(|e| e.split.is_some());
    entries.iter().filter(|e| !marked || e.split == Some(split)).cloned().collect()
}

/// Pipeline settings stored next to a checkpoint so evaluation prepares data identically.
#[derive(Serialize, Deserialize)]
struct StoredPipeline {
    config: RunConfig,
    condition: Condition,
}

fn train_cmd(entries: &[ManifestEntry], regions: Option<&RegionMap>, cfg: &RunConfig, out: &Path) -> Result<()> {
    let exp = cfg.experiment();
    let selected = select_split(entries, Split::Train);
    let mut corpus = prepare_corpus(&selected, &cfg.source(), regions, &exp, exp.chunking, EXEC)?;
    if !exp.markers {
        corpus = corpus.without_markers();
    }
    if corpus.utterances.is_empty() {
        bail!("no trainable utterances in the manifest");
    }
    log::info!("training on {} utterances ({} skipped)", corpus.utterances.len(), corpus.skipped.len());
    let (model, history) = train(&corpus.samples(), &exp.model, FusionMode::Learned, EXEC)?;
    save_checkpoint(out, &model)?;
    write_json(&out.join("history.json"), &history)?;
    let stored = StoredPipeline { config: cfg.clone(), condition: Condition::full(&exp) };
    write_json(&out.join(PIPELINE_FILE), &stored)?;
    eprintln!("model fingerprint: {}", model.fingerprint());
    Ok(())
}

fn eval_checkpoint(entries: &[ManifestEntry], regions: Option<&RegionMap>, dir: &Path, out: &Path) -> Result<()> {
    let started = std::time::Instant::now();
    let model = load_checkpoint(dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
    let stored: StoredPipeline = serde_json::from_slice(&std::fs::read(dir.join(PIPELINE_FILE))?)
        .with_context(|| format!("reading {}", dir.join(PIPELINE_FILE).display()))?;
    let cfg = stored.config;
    let exp = cfg.experiment();
    let source = cfg.source();
    let entries = select_split(entries, Split::Test);
    let mut corpus = prepare_corpus(&entries, &source, regions, &exp, exp.chunking, EXEC)?;
    if !exp.markers {
        corpus = corpus.without_markers();
    }
    if corpus.utterances.is_empty() {
        bail!("no evaluable utterances in the manifest");
    }
    let test: Vec<&PreparedUtterance> = corpus.utterances.iter().collect();
    let (predictions, m) = evaluate_model(&model, &test)?;
    let fold = FoldResult {
        fold: 0,
        train_size: 0,
        test_size: test.len(),
        macro_f1: m.macro_f1,
        micro_f1: m.micro_f1,
        pcc: m.pcc,
        alpha: model.alpha().to_vec(),
        confusion: m.confusion,
        final_train_loss: None,
        predictions,
    };
    let report = aggregate(
        stored.condition,
        Protocol::FixedSplit,
        vec![fold],
        &corpus,
        entries.len(),
        &source,
        model.fingerprint(),
        started.elapsed().as_secs_f64(),
    );
    write_json(out, &report)
}

#[derive(Serialize)]
struct SweepRow {
    delta_ms: f64,
    chunks: ChunkStats,
    report: Option<fluency_core::eval::ExperimentReport>,
}

fn sweep(
    entries: &[ManifestEntry],
    regions: Option<&RegionMap>,
    cfg: &RunConfig,
    deltas: &[f64],
    chunks_only: bool,
    out: &Path,
) -> Result<()> {
    if deltas.is_empty() {
        return Err(crate::Invalid("no thresholds to sweep".into()).into());
    }
    for &d in deltas {
        cfg.vad.check_delta(d).map_err(|e| crate::Invalid(e.to_string()))?;
    }
    let mut rows = Vec::new();
    for &delta in deltas {
        let exp = ExperimentConfig { delta_ms: delta, chunking: true, ..cfg.experiment() };
        let done = chunk_all(entries, regions, &exp)?;
        let per_utt: Vec<_> = done.into_iter().map(|(_, c)| c).collect();
        let chunks = chunk_stats(delta, &per_utt);
        let report = if chunks_only {
            None
        } else {
            let corpus = prepare_corpus(entries, &cfg.source(), regions, &exp, true, EXEC)?;
            let condition = Condition { name: format!("delta_{delta}"), ..Condition::full(&exp) };
            Some(run_condition(entries, &corpus, &cfg.source(), &exp, condition, EXEC)?)
        };
        rows.push(SweepRow { delta_ms: delta, chunks, report });
    }
    std::fs::create_dir_all(out)?;
    write_json(&out.join("sweep.json"), &rows)?;
    let mut w = create(&out.join("summary.csv"))?;
    writeln!(w, "delta_ms,chunk_count,mean_duration,std_duration,macro_f1,pcc")?;
    for r in &rows {
        let (f1, pcc) = match &r.report {
            Some(rep) => (format!("{:.6}", rep.macro_f1), rep.pcc.map(|p| format!("{p:.6}")).unwrap_or_default()),
            None => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{:.6},{:.6},{f1},{pcc}",
            r.delta_ms, r.chunks.chunk_count, r.chunks.mean_duration, r.chunks.std_duration
        )?;
    }
    w.flush()?;
    Ok(())
}

fn export(
    entries: &[ManifestEntry],
    regions: Option<&RegionMap>,
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let exp = cfg.experiment();
    let alpha = match checkpoint {
        Some(dir) => load_checkpoint(dir)?.alpha().to_vec(),
        None => vec![1.0 / SSL_MODELS.len() as f64; SSL_MODELS.len()],
    };
    let corpus = prepare_corpus(entries, &cfg.source(), regions, &exp, exp.chunking, EXEC)?;
    let mut w = create(out)?;
    write_embeddings_csv(&mut w, &corpus, &alpha)?;
    w.flush()?;
    Ok(())
}
