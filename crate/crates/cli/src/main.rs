mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Runner for the trait-conditioned behavior prediction benchmark.
#[derive(Debug, Parser)]
#[command(name = "traitbench", version, about)]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scenario bank checks.
    #[command(subcommand)]
    Bank(BankCommand),
    /// Generate a synthetic bank, cohort and responses.
    Synth(ConfigArg),
    /// Score item responses into trait profiles.
    Score(ConfigArg),
    /// Write serialized prompts.
    Prompts(PromptsArgs),
    /// Run one backend on the eval split and write predictions JSONL.
    Predict(PredictArgs),
    /// Score a predictions file against the ground truth.
    Eval(EvalArgs),
    /// Evaluate every backend at every trait count.
    Sweep(ConfigArg),
    /// Export the training split as SFT JSONL.
    ExportSft(ExportArgs),
}

#[derive(Debug, Subcommand)]
enum BankCommand {
    /// Validate a bank file, and with --config the response records too.
    Validate {
        /// Bank JSON file; defaults to the bank named in --config.
        path: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitSide {
    Eval,
    Train,
    All,
}

#[derive(Debug, Args)]
struct PromptsArgs {
    #[arg(long)]
    config: PathBuf,
    /// Trait count; defaults to the largest configured count.
    #[arg(long)]
    traits: Option<usize>,
    #[arg(long, value_enum, default_value = "eval")]
    split: SplitSide,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    config: PathBuf,
    /// Backend name as configured (remote backends: `name` or `model_name`).
    #[arg(long)]
    backend: String,
    #[arg(long)]
    traits: Option<usize>,
    /// Keep finished pairs from an earlier run and retry remote failures.
    #[arg(long)]
    resume: bool,
    /// Requests per appended chunk.
    #[arg(long, default_value_t = 64)]
    chunk: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    /// Predictions JSONL from `predict` or an external model.
    #[arg(long)]
    predictions: PathBuf,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    traits: Option<usize>,
    /// Loss weight on answer tokens; defaults to `sft.answer_weight`.
    #[arg(long)]
    weight: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Validation(_) => 4,
            CliError::Runtime(_) => 5,
        }
    }

    pub fn validation(e: impl std::fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Bank(BankCommand::Validate { path, config }) => {
            commands::bank_validate(path, config)
        }
        Command::Synth(a) => commands::with_run("synth", &a.config, commands::synth),
        Command::Score(a) => commands::with_run("score", &a.config, commands::score),
        Command::Prompts(a) => commands::with_run("prompts", &a.config, |run| {
            commands::prompts(run, a.traits, a.split)
        }),
        Command::Predict(a) => commands::with_run("predict", &a.config, |run| {
            commands::predict(run, &a.backend, a.traits, a.resume, a.chunk)
        }),
        Command::Eval(a) => {
            commands::with_run("eval", &a.config, |run| commands::eval(run, &a.predictions))
        }
        Command::Sweep(a) => commands::with_run("sweep", &a.config, commands::sweep),
        Command::ExportSft(a) => commands::with_run("export-sft", &a.config, |run| {
            commands::export_sft(run, a.traits, a.weight)
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
