mod ingest;
mod manifest;
mod predict;
mod rank;
mod report;
mod train;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Multi-objective siting: ingest site tables, rank sites by Pareto-front
/// frequency over every objective subset, train location predictors and
/// emit reports.
#[derive(Parser)]
#[command(name = "siting", version)]
struct Cli {
    /// Log level when RUST_LOG is unset (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, deduplicate and scale a site table.
    Ingest(ingest::Args),
    /// Sweep every objective subset and score the sites.
    Rank(rank::Args),
    /// Train a predictor from a ranked dataset.
    Train(train::Args),
    /// Predict objectives, metric and importances for one location.
    Predict(predict::Args),
    /// Plot-ready data and listings from earlier runs.
    Report(report::Args),
}

/// Bad invocation detected after argument parsing (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Usage error unless `path` is an existing file.
pub fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

pub fn create_dir(path: &PathBuf) -> anyhow::Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .format_timestamp(None)
        .init();

    let outcome = match cli.command {
        Command::Ingest(a) => ingest::run(a),
        Command::Rank(a) => rank::run(a),
        Command::Train(a) => train::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Report(a) => report::run(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
