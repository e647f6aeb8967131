mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use crate::config::{Overrides, PipelineConfig};

/// linearFGW graph embeddings, kernels and FGW distances.
#[derive(Debug, Parser)]
#[command(name = "linfgw", version)]
struct Cli {
    /// TOML file with pipeline settings; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Write a synthetic dense-vs-sparse dataset as JSON
    Synth,
    /// Compute the FGW barycenter used as reference graph
    Barycenter,
    /// Embed every graph against the reference
    Embed,
    /// Distance and Gaussian Gram matrices
    Gram,
    /// Nested cross-validated SVM accuracy
    Classify,
    /// k-means and spectral clustering of the embeddings
    Cluster,
    /// Time pairwise FGW against the linearFGW pipeline
    Bench,
    /// Check the linearization lemmas on random small graphs
    Verify,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const VERIFY: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const NUMERICAL: u8 = 3;

    pub fn usage(message: String) -> Self {
        Self {
            code: Self::USAGE,
            message,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<linfgw::Error> for CliError {
    fn from(e: linfgw::Error) -> Self {
        use linfgw::Error as E;
        let code = match e {
            E::Numerical(_) | E::DegenerateReference { .. } | E::DegenerateAffinity { .. } => Self::NUMERICAL,
            _ => Self::USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(threads) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot set up {threads} threads: {e}")))?;
    }
    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Barycenter => commands::barycenter(&cfg),
        Command::Embed => commands::embed(&cfg),
        Command::Gram => commands::gram(&cfg),
        Command::Classify => commands::classify(&cfg),
        Command::Cluster => commands::cluster(&cfg),
        Command::Bench => commands::bench(&cfg),
        Command::Verify => commands::verify(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
