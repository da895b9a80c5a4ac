//! `tradenet`: drive the trade-network analysis pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure. All randomness flows from the configured master seed, so any
//! command rerun with the same config and seed rewrites identical bytes.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tradenet::error::ErrorClass;

use config::PipelineConfig;
use stages::OutputLock;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or invocation; exit 2.
    Config(String),
    /// Anything surfaced by the pipeline itself; exit 3 or 4 by class.
    Core(tradenet::Error),
}

impl From<tradenet::Error> for CliError {
    fn from(e: tradenet::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Numerical => 4,
                ErrorClass::Data | ErrorClass::Io => 3,
            },
        }
    }
}

#[derive(Parser)]
#[command(
    name = "tradenet",
    version,
    about = "Statistical analysis pipeline for directed trade networks"
)]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse flows and attributes, impute gaps, write the canonical network.
    Ingest,
    /// Structural statistics of the ingested network.
    Stats,
    /// Component structure under a sweep of weight thresholds.
    Connectivity,
    /// Fit the configured ERGM by maximum pseudo-likelihood.
    Ergm,
    /// Fit stochastic block models and select the class count by ICL.
    Sbm,
    /// Assemble the per-stage artifacts into one document.
    Report,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = PipelineConfig::load(&cli.config, cli.seed, cli.out.clone())?;
    let _lock = OutputLock::acquire(&config.output)?;
    match cli.command {
        Command::Ingest => stages::cmd_ingest(&config),
        Command::Stats => stages::cmd_stats(&config),
        Command::Connectivity => stages::cmd_connectivity(&config),
        Command::Ergm => stages::cmd_ergm(&config),
        Command::Sbm => stages::cmd_sbm(&config),
        Command::Report => stages::cmd_report(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
