mod commands;
mod config;
mod failure;
mod scores;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{BackendKind, MethodKind, SamplerKind, SplitSel};

/// Variant-product matching pipeline.
///
/// Settings come from the TOML file given by --config, then the
/// VARM_REMOTE_URL / VARM_GENERATIVE_URL environment variables, then flags.
#[derive(Debug, Parser)]
#[command(name = "varm", version)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file of the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Maximum concurrent backend requests.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a catalog; optionally rewrite it normalized.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Generate a synthetic catalog with planted variation keys.
    Synth,
    /// Build the labeled, split and serialized pair dataset.
    Pairs {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, value_enum)]
        sampler: Option<SamplerKind>,
        /// Train share as "num/den".
        #[arg(long)]
        ratio: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Score an exported pair set with a backend.
    Match {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        #[arg(long, value_enum)]
        split: Option<SplitSel>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        remote_url: Option<String>,
        #[arg(long)]
        generative_url: Option<String>,
    },
    /// Label variation and common attributes of each group.
    Attrs {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<MethodKind>,
        #[arg(long)]
        generative_url: Option<String>,
    },
    /// Compute metrics from a score file and/or an attribute report.
    Eval {
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        attrs: Option<PathBuf>,
        /// Catalog holding gold variation keys, for attribute reports.
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Metrics as a function of training set size.
    Curve {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        #[arg(long, value_enum)]
        sampler: Option<SamplerKind>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        remote_url: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error [{}]: {:#}", f.category.as_str(), f.error);
            ExitCode::from(f.category.exit_code())
        }
    }
}
