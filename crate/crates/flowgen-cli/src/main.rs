use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flowgen_cli::config::{ExperimentConfig, ExperimentKind};
use flowgen_cli::drivers;

/// Kernel-flow and score-matching experiments on analytic targets.
#[derive(Parser)]
#[command(name = "flowgen", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the iteration count (training) or step horizon (sampling).
    #[arg(long)]
    iters: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a generator against a Gaussian target and log Wasserstein-2.
    Gaussian(RunArgs),
    /// Train a generator against the mixture target and log mode coverage.
    Gmm(RunArgs),
    /// Run the discriminator-guided Langevin sampler (shape morphing).
    Morph(RunArgs),
    /// Export a vector-field grid (score or kernel flow view) as CSV.
    Quiver(RunArgs),
    /// Parse and validate a config without running anything.
    Validate {
        /// Path to the JSON experiment config.
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(args: &RunArgs, expected: &[ExperimentKind]) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if !expected.contains(&cfg.experiment) {
        anyhow::bail!(
            "config declares experiment `{}`, which this subcommand does not run",
            cfg.experiment.as_str()
        );
    }
    cfg.apply_overrides(args.seed, args.iters, args.out.clone());
    cfg.validate()?;
    Ok(cfg)
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Gaussian(args) => {
            let cfg = load(args, &[ExperimentKind::Gaussian])?;
            drivers::run_experiment(&cfg)
        }
        Command::Gmm(args) => {
            let cfg = load(args, &[ExperimentKind::Gmm])?;
            drivers::run_experiment(&cfg)
        }
        Command::Morph(args) => {
            let cfg = load(args, &[ExperimentKind::Morph, ExperimentKind::Langevin])?;
            drivers::run_experiment(&cfg)
        }
        Command::Quiver(args) => {
            let cfg = load(args, &[ExperimentKind::Quiver])?;
            drivers::run_experiment(&cfg)
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(config)?;
            drivers::validate_only(&cfg)?;
            println!("config OK: {} experiment", cfg.experiment.as_str());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
