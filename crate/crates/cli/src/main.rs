//! `vulnrag`: ingest a dataset, split it, index the knowledge base, then
//! detect, evaluate or run the RAG/CoT ablation grid.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 provider or
//! transport failure.

mod commands;
mod config;
mod report;

use clap::{ArgAction, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use vulnrag_core::{EmbedError, LlmError, PipelineError, StoreError};

#[derive(Debug, Parser)]
#[command(
    name = "vulnrag",
    version,
    about = "Retrieval-augmented vulnerability detection for C/C++ functions"
)]
struct Cli {
    /// TOML file with pipeline, provider and embedder settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read a dataset and write a corpus manifest with class statistics.
    Ingest(commands::IngestArgs),
    /// Draw the balanced test set and the knowledge base into the manifest.
    Split(commands::SplitArgs),
    /// Embed the knowledge base and write the vector store.
    Index(commands::IndexArgs),
    /// Classify one function and print the result as JSON.
    Detect(commands::DetectArgs),
    /// Classify the test set and write JSON and Markdown reports.
    Evaluate(commands::EvaluateArgs),
    /// Run the four RAG/CoT cells and write the ablation table.
    Ablate(commands::AblateArgs),
    /// Write a synthetic planted-pattern dataset for offline runs.
    Synth(commands::SynthArgs),
}

const EXIT_INPUT: u8 = 2;
const EXIT_PROVIDER: u8 = 3;

fn is_provider_failure(cause: &(dyn std::error::Error + 'static)) -> bool {
    if let Some(e) = cause.downcast_ref::<PipelineError>() {
        return e.is_provider_failure();
    }
    if let Some(e) = cause.downcast_ref::<LlmError>() {
        return e.is_provider_failure();
    }
    matches!(
        cause.downcast_ref::<EmbedError>(),
        Some(EmbedError::ProviderUnavailable { .. })
    ) || matches!(
        cause.downcast_ref::<StoreError>(),
        Some(StoreError::Embed(EmbedError::ProviderUnavailable { .. }))
    )
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(is_provider_failure) {
        EXIT_PROVIDER
    } else {
        EXIT_INPUT
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

    let config = cli.config.as_deref();
    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Split(a) => commands::split(a),
        Command::Index(a) => commands::index(a, config),
        Command::Detect(a) => commands::detect_cmd(a, config),
        Command::Evaluate(a) => commands::evaluate(a, config),
        Command::Ablate(a) => commands::ablate(a, config),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
