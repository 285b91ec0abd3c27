//! `cgrs`: two-stage caption-guided image retrieval from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use cgrs_core::caption::ProviderError;
use cgrs_core::Error;
use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::PipelineConfig;

/// Two-stage text-to-image retrieval: coarse cosine search, then rerank
/// by similarity between the query and generated captions.
#[derive(Debug, Parser)]
#[command(name = "cgrs", version)]
struct Cli {
    /// TOML pipeline config; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a gallery manifest and embedding file.
    Ingest(commands::IngestArgs),
    /// Exact top-k cosine retrieval for every query.
    Retrieve(commands::RetrieveArgs),
    /// Caption every distinct coarse candidate, using the cache.
    Caption(commands::CaptionArgs),
    /// Fuse coarse and caption similarity and reorder candidates.
    Rerank(commands::RerankArgs),
    /// Recall@k of one result file.
    Eval(commands::EvalArgs),
    /// Per-k recall deltas and per-query movement between two runs.
    Compare(commands::CompareArgs),
    /// Recall over a grid of fusion weights.
    Sweep(commands::SweepArgs),
    /// Finite-difference and closed-form checks of the training losses.
    Losscheck(commands::LosscheckArgs),
    /// Write a synthetic benchmark with planted ground truth.
    Synth(commands::SynthArgs),
}

/// A failed command: message for stderr plus the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const IO: u8 = 1;
    pub const VALIDATION: u8 = 2;
    pub const PROVIDER: u8 = 3;
    pub const CHECK: u8 = 4;

    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: Self::IO,
            message: message.into(),
        }
    }

    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => Self::IO,
            Error::Provider(ProviderError::Config(_)) => Self::IO,
            Error::Provider(_) => Self::PROVIDER,
            _ => Self::VALIDATION,
        };
        let message = match &e {
            Error::Validation(report) => format!("{e}\n{}", report.to_string().trim_end()),
            _ => e.to_string(),
        };
        Self { code, message }
    }
}


fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Ingest(a) => commands::ingest(a, &mut cfg),
        Command::Retrieve(a) => commands::retrieve(a, &mut cfg),
        Command::Caption(a) => commands::caption(a, &mut cfg),
        Command::Rerank(a) => commands::rerank(a, &mut cfg),
        Command::Eval(a) => commands::eval(a, &mut cfg),
        Command::Compare(a) => commands::compare(a, &mut cfg),
        Command::Sweep(a) => commands::sweep(a, &mut cfg),
        Command::Losscheck(a) => commands::losscheck(a, &mut cfg),
        Command::Synth(a) => commands::synth(a, &mut cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
