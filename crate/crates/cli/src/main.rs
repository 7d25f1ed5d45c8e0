use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vibcav::config::ExperimentConfig;
use vibcav::pipeline::{self, StageOutcome};
use vibcav::Error;

/// Exit status when every stage succeeded but some TCAV report failed its probe gate.
const EXIT_GATE_FAILURE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "vibcav", version, about = "Concept activation vectors for bearing fault classifiers")]
struct Cli {
    /// Experiment config (JSON). Defaults apply to anything not given.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for the stage.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Dotted config override, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic dataset and concept example sets.
    Simulate,
    /// Segment and label raw recordings (CSV or binary signal files).
    Ingest {
        /// Signal files or directories of them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// JSON object mapping file names to {"label", "rotation_speed_rpm"}.
        #[arg(long)]
        labels: PathBuf,
        /// Dataset file to write.
        #[arg(long)]
        output: PathBuf,
    },
    /// Train a classifier and write its checkpoint.
    Train,
    /// Run TCAV on a trained checkpoint.
    Tcav {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Aggregate the results found under a run directory.
    Report {
        run_dir: PathBuf,
    },
}

fn load_config(cli: &Cli) -> vibcav::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if !cli.overrides.is_empty() {
        cfg = cfg.with_overrides(&cli.overrides)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> vibcav::Result<StageOutcome> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Report { run_dir } => pipeline::cmd_report(run_dir),
        Command::Simulate => pipeline::cmd_simulate(&load_config(cli)?, &cli.out),
        Command::Train => pipeline::cmd_train(&load_config(cli)?, &cli.out),
        Command::Tcav { checkpoint } => pipeline::cmd_tcav(&load_config(cli)?, checkpoint, &cli.out),
        Command::Ingest { inputs, labels, output } => pipeline::cmd_ingest(&load_config(cli)?, inputs, labels, output),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            if !outcome.message.is_empty() {
                println!("{}", outcome.message);
            }
            for f in &outcome.files {
                log::debug!("wrote {}", f.display());
            }
            if outcome.gate_failures > 0 {
                log::warn!("{} report(s) failed the probe accuracy gate", outcome.gate_failures);
                ExitCode::from(EXIT_GATE_FAILURE)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
