//! `sensa` study workflow: sample, run, analyze, compare, report and
//! time-varying analysis, each a file-in/file-out stage.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod target;

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};

pub use config::{Study, StudyConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "sensa", version, about = "Global sensitivity analysis workflow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Study configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; also caps parallel simulator processes.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the designs the configured methods need.
    Sample,
    /// Evaluate the target on every design.
    Run,
    /// Compute sensitivity measures for each selected output.
    Analyze,
    /// Ranking table, Kendall's W and pairwise correlations.
    Compare,
    /// Summary tables and plot data.
    Report,
    /// Analyse several days of a time-series target.
    Tvsa {
        /// Day to analyse (YYYY-MM-DD); repeat or comma-separate.
        #[arg(long = "date", value_delimiter = ',', required = true)]
        dates: Vec<NaiveDate>,
    },
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    if cli.jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let study = Study::load(path, cli.seed)?;
    match &cli.command {
        Command::Sample => commands::sample(&study),
        Command::Run => commands::run(&study, cli.jobs),
        Command::Analyze => commands::analyze(&study),
        Command::Compare => commands::compare(&study),
        Command::Report => commands::report(&study),
        Command::Tvsa { dates } => commands::tvsa(&study, dates),
    }
}
