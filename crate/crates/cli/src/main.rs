//! `cssm`: synthesize data, train folds, evaluate, explain and ablate.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cssm_core::signal_io::SyntheticSpec;
use cssm_core::training::Precision;

use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Single,
    Double,
}

#[derive(Debug, Parser)]
#[command(
    name = "cssm",
    version,
    about = "Motor-imagery decoding with wavelet front-ends and state-space branches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the synthesis, split and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "cssm_out")]
    out: PathBuf,
    /// Comma-separated fold indices.
    #[arg(long, global = true, value_delimiter = ',')]
    folds: Option<Vec<usize>>,
    #[arg(long, global = true)]
    precision: Option<PrecisionArg>,
    /// Dataset file, overriding the config.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Overrides the number of training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset at the configured path or `<out>/dataset.bin`.
    Synth,
    /// Train the selected folds and report test metrics.
    Train {
        /// Continue from `<out>/checkpoints/fold<i>.ckpt` where present.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate trained folds, with optional SNR and sampling-rate sweeps.
    Eval,
    /// Export class-activation maps of test samples.
    Explain {
        /// Index into the fold's test set; exports only that sample.
        #[arg(long)]
        sample: Option<usize>,
    },
    /// Train and evaluate the front-end and module ablation grid.
    Ablate,
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("CSSM_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "CSSM_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if matches!(cli.command, Command::Synth) && cfg.synth.is_none() {
        cfg.synth = Some(SyntheticSpec::default());
    }
    let sample = match cli.command {
        Command::Explain { sample } => sample,
        _ => None,
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        folds: cli.folds.clone(),
        precision: cli.precision.map(|p| match p {
            PrecisionArg::Single => Precision::Single,
            PrecisionArg::Double => Precision::Double,
        }),
        dataset: cli.dataset.clone(),
        sample,
        epochs: cli.epochs,
    });
    match cli.command {
        Command::Synth => commands::cmd_synth(&mut cfg, &cli.out),
        Command::Train { resume } => commands::cmd_train(&cfg, &cli.out, resume),
        Command::Eval => commands::cmd_eval(&cfg, &cli.out),
        Command::Explain { .. } => commands::cmd_explain(&cfg, &cli.out),
        Command::Ablate => commands::cmd_ablate(&cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
