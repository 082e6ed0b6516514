//! Batch experiment runner: prepare data, train, evaluate, and render
//! reports, all driven by a TOML config plus a few override flags.
//!
//! Exit codes: 0 on success, 1 for user/config errors, 2 for runtime or
//! numerical errors. Set `RUST_LOG` to control log verbosity.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use config::{RunConfig, TaskKind};

#[derive(Parser)]
#[command(
    name = "guilt-detect",
    version,
    about = "Emotion and guilt text classification pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Multiclass,
    GuiltBinary,
}

impl From<TaskArg> for TaskKind {
    fn from(value: TaskArg) -> Self {
        match value {
            TaskArg::Multiclass => TaskKind::Multiclass,
            TaskArg::GuiltBinary => TaskKind::GuiltBinary,
        }
    }
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override both the split seed and the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Clean, transform per task, split, and write the split files.
    Prepare {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the configured task.
        #[arg(long)]
        task: Option<TaskArg>,
    },
    /// Build the vocabulary and train; writes checkpoints and the epoch log.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the training preset (guiltbert or baseline).
        #[arg(long)]
        preset: Option<String>,
    },
    /// Run a checkpoint over the test split and write report files.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint to evaluate; defaults to best.bin in the output dir.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Render a saved report JSON as a table.
    Report {
        /// Path to a report.json written by `evaluate`.
        #[arg(long)]
        report: PathBuf,
    },
}

enum AppError {
    User(anyhow::Error),
    Runtime(anyhow::Error),
}

fn user<T>(result: Result<T>) -> Result<T, AppError> {
    result.map_err(AppError::User)
}

fn runtime<T>(result: Result<T>) -> Result<T, AppError> {
    result.map_err(AppError::Runtime)
}

fn load_config(common: &CommonArgs, task: Option<TaskArg>) -> Result<RunConfig> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.split.seed = seed;
        config.train.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output.dir = out.clone();
    }
    if let Some(task) = task {
        config.task = task.into();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Prepare { common, task } => {
            let config = user(load_config(&common, task))?;
            runtime(commands::cmd_prepare(&config))
        }
        Command::Train { common, preset } => {
            let mut config = user(load_config(&common, None))?;
            if let Some(preset) = preset {
                config.train.preset = Some(preset);
                user(config.validate())?;
            }
            user(commands::ensure_prepared(&config))?;
            runtime(commands::cmd_train(&config))
        }
        Command::Evaluate { common, checkpoint } => {
            let config = user(load_config(&common, None))?;
            let checkpoint =
                checkpoint.unwrap_or_else(|| commands::best_checkpoint_path(&config));
            user(commands::ensure_evaluable(&config, &checkpoint))?;
            runtime(commands::cmd_evaluate(&config, &checkpoint))
        }
        Command::Report { report } => user(commands::cmd_report(&report)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::User(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
        Err(AppError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
