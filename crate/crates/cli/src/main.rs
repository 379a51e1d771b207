//! `fluency`: batch front end for segmentation, feature export, training and evaluation.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid arguments or configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

/// Configuration problems that should exit with status 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser, Debug)]
#[command(name = "fluency", version, about = "Breath-group fluency scoring pipeline")]
struct Cli {
    /// TOML or JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for initialization, shuffling, dropout, folds and mock embeddings.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-utterance work (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect speech and write breath-group chunks as CSV.
    Segment {
        #[command(flatten)]
        pipe: PipelineArgs,
        /// Chunk CSV destination (`-` for stdout).
        #[arg(long, default_value = "-")]
        out: PathBuf,
        /// Also write chunking statistics as JSON.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Write per-chunk fluency markers and voice-quality measures as CSV.
    Features {
        #[command(flatten)]
        pipe: PipelineArgs,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Train a classifier on the manifest (its `train` split when one is marked).
    Train {
        #[command(flatten)]
        pipe: PipelineArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint, or run the full cross-validated experiment without one.
    Eval {
        #[command(flatten)]
        pipe: PipelineArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Report JSON destination (`-` for stdout).
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Repeat chunking and the experiment for several silence thresholds.
    Sweep {
        #[command(flatten)]
        pipe: PipelineArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Thresholds in milliseconds.
        #[arg(long, value_delimiter = ',', default_values_t = fluency_core::segmentation::SWEEP_DELTAS_MS)]
        deltas: Vec<f64>,
        /// Only report chunking statistics; skip training.
        #[arg(long)]
        chunks_only: bool,
        /// Output directory for `sweep.json` and `summary.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full model and every ablation on identical folds.
    Ablate {
        #[command(flatten)]
        pipe: PipelineArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Output directory for `reports.json` and `summary.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write utterance-level fused embeddings as CSV for external projection tools.
    ExportEmbeddings {
        #[command(flatten)]
        pipe: PipelineArgs,
        /// Take fusion weights from this checkpoint instead of uniform weights.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    /// JSON Lines manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// `mock`, or a directory of FEB1 embeddings.
    #[arg(long, env = "FLUENCY_EMB_DIR")]
    emb: Option<String>,
    /// Width of mock embeddings.
    #[arg(long)]
    mock_dim: Option<usize>,
    /// Speech regions from an external VAD (VAD-JSON lines) instead of the energy detector.
    #[arg(long)]
    vad_json: Option<PathBuf>,
    /// Minimum silence in milliseconds that separates breath groups.
    #[arg(long)]
    delta_ms: Option<f64>,
    /// Append voice-quality measures to the marker vector.
    #[arg(long)]
    vq_markers: bool,
    /// Drop fluency markers from the classifier input.
    #[arg(long)]
    no_markers: bool,
    /// Treat each utterance as a single chunk.
    #[arg(long)]
    no_chunking: bool,
}

#[derive(Args, Debug, Clone, Default)]
struct ModelArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    conv_filters: Option<usize>,
    #[arg(long)]
    lstm_hidden: Option<usize>,
    #[arg(long)]
    lstm_layers: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
}

impl PipelineArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(e) = &self.emb {
            cfg.embeddings = e.clone();
        }
        if let Some(d) = self.mock_dim {
            cfg.mock_dim = d;
        }
        if let Some(p) = &self.vad_json {
            cfg.vad_json = Some(p.clone());
        }
        if let Some(d) = self.delta_ms {
            cfg.delta_ms = d;
        }
        cfg.vq_markers |= self.vq_markers;
        if self.no_markers {
            cfg.markers = false;
        }
        if self.no_chunking {
            cfg.chunking = false;
        }
    }
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let m = &mut cfg.model;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { m.$f = v; } )* };
        }
        set!(epochs, learning_rate, batch_size, conv_filters, lstm_hidden, lstm_layers, dropout);
        if let Some(k) = self.folds {
            cfg.folds = k;
        }
    }
}

impl Command {
    fn pipeline(&self) -> &PipelineArgs {
        match self {
            Command::Segment { pipe, .. }
            | Command::Features { pipe, .. }
            | Command::Train { pipe, .. }
            | Command::Eval { pipe, .. }
            | Command::Sweep { pipe, .. }
            | Command::Ablate { pipe, .. }
            | Command::ExportEmbeddings { pipe, .. } => pipe,
        }
    }

    fn model(&self) -> Option<&ModelArgs> {
        match self {
            Command::Train { model, .. }
            | Command::Eval { model, .. }
            | Command::Sweep { model, .. }
            | Command::Ablate { model, .. } => Some(model),
            _ => None,
        }
    }
}

fn resolve(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cli.command.pipeline().apply(&mut cfg);
    if let Some(m) = cli.command.model() {
        m.apply(&mut cfg);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = resolve(&cli).and_then(|cfg| {
        eprintln!("config fingerprint: {}", cfg.experiment().fingerprint(&cfg.source()));
        fluency_core::par::with_jobs(cli.jobs, || commands::run(&cli.command, &cfg))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Invalid>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
