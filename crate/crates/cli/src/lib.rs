//! `tcontrol` command-line front end.

mod commands;
mod config;
mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};

pub use config::RunConfig;

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for a domain error (bad data, failed fetch, failed stage).
pub const EXIT_DOMAIN: i32 = 1;
/// Exit code for a usage error (bad flags, bad config file).
pub const EXIT_USAGE: i32 = 2;

/// A problem with how the tool was invoked rather than with the data.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(name = "tcontrol", version, about = "Territorial-control event labelling toolkit")]
pub struct Cli {
    /// TOML config file; command-line flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, value_name = "LEVEL")]
    pub log_level: Option<String>,
    /// Seed for every randomised stage (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch articles from live URLs or archive snapshots.
    Scrape(ScrapeArgs),
    /// Preprocess raw articles, attach labels and split.
    BuildCorpus(BuildCorpusArgs),
    /// Train the sentence-embedding classifier.
    TrainEmbed(TrainEmbedArgs),
    /// Train a soft prompt for a frozen causal LM.
    TrainPrompt(TrainPromptArgs),
    /// Label articles with a trained model.
    Predict(PredictArgs),
    /// Score predictions against gold labels.
    Evaluate(EvaluateArgs),
    /// Run the stages listed in the config file's [pipeline] table.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct ScrapeArgs {
    /// One URL per line, optionally followed by a YYYY-MM-DD snapshot date.
    #[arg(long)]
    pub urls: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Snapshot date for URLs listed without one; without any date the live page is fetched.
    #[arg(long)]
    pub date: Option<String>,
    /// Keep only articles mentioning one of these (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub keywords: Vec<String>,
    /// Request timeout in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long)]
    pub user_agent: Option<String>,
    #[arg(long)]
    pub parallel: Option<usize>,
    #[arg(long)]
    pub retries: Option<u32>,
}

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    /// Raw articles, JSON lines.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Label CSV: id,t_mil,t_loc,t_milcas,t_civcas,t_isis_vic.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainEmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub encoder_id: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub freeze_encoder: bool,
}

#[derive(Debug, Args)]
pub struct TrainPromptArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Stop after this many optimiser steps, cycling over the data if needed.
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub virtual_tokens: Option<usize>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("predictor").required(true).args(["model", "prompt_state"])))]
pub struct PredictArgs {
    /// Embedding classifier directory.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Trained prompt directory.
    #[arg(long)]
    pub prompt_state: Option<PathBuf>,
    /// Corpus file or raw-article JSON lines.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Corpus whose eval split holds the gold labels.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// json or text.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Pipeline config; defaults to the global --config file.
    pub file: Option<PathBuf>,
}

/// Parse `argv` (program name first), run, and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_DOMAIN
            }
        }
    }
}
