//! The `karecoder` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 external service error (LLM endpoint, interpreter, sandbox).

mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::cleanse::CleanseError;
use crate::corpus::CorpusError;
use crate::judge::JudgeError;
use crate::knowledge::{KnowledgeError, KnowledgeFormat};
use crate::llmgateway::GatewayError;
use crate::pipeline::{PipelineError, Strategy};

pub use config::AppConfig;

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn external(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::SandboxUnavailable(_) => Self::external(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<KnowledgeError> for CliError {
    fn from(e: KnowledgeError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<CleanseError> for CliError {
    fn from(e: CleanseError) -> Self {
        match e {
            CleanseError::InvalidConfig(_) => Self::config(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<JudgeError> for CliError {
    fn from(e: JudgeError) -> Self {
        match e {
            JudgeError::Sandbox(_) => Self::external(e.to_string()),
            JudgeError::InvalidK => Self::config(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::InvalidRequest(_) => Self::config(e.to_string()),
            _ => Self::external(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Gateway(g) => g.into(),
            PipelineError::EmptyCompletion { .. } => Self::external(e.to_string()),
            _ => Self::config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "karecoder",
    version,
    about = "Knowledge-aware code generation and Pass@k evaluation"
)]
pub struct Cli {
    /// JSON configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Problem corpus operations.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Comment stripping and near-duplicate removal.
    #[command(subcommand)]
    Cleanse(CleanseCmd),
    /// Generate candidate programs with a strategy.
    Generate(GenerateArgs),
    /// Judge generated candidates.
    #[command(subcommand)]
    Judge(JudgeCmd),
    /// Judge if needed, then print Pass@k tables.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Run every reference solution against its test cases.
    Validate(ValidateArgs),
    /// Split problems into pre/ and post/ by release date.
    Split(SplitArgs),
    /// Difficulty and tag distributions.
    Stats(StatsArgs),
    /// Strip comments and docstrings from reference solutions.
    Strip(StripArgs),
    /// Remove near-duplicate reference solutions.
    #[command(alias = "dedupe")]
    Dedup(DedupArgs),
}

#[derive(Debug, Subcommand)]
pub enum CleanseCmd {
    Strip(StripArgs),
    #[command(alias = "dedupe")]
    Dedup(DedupArgs),
}

#[derive(Debug, Subcommand)]
pub enum JudgeCmd {
    /// Execute candidates and score them with Pass@k.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct CorpusPath {
    /// Corpus directory (one JSON document per problem) or a single file.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct JudgeOpts {
    /// Wall-clock limit per test case, in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    /// Parallel sandboxes; 0 means one per CPU.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub corpus: CorpusPath,
    #[command(flatten)]
    pub judge: JudgeOpts,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub corpus: CorpusPath,
    /// Problems released before this date go to pre/, the rest to post/.
    #[arg(long, default_value = "2021-09-01")]
    pub cutoff: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusPath,
    /// Emit JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct StripArgs {
    #[command(flatten)]
    pub corpus: CorpusPath,
    /// Output directory; without it the corpus is rewritten in place.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    #[command(flatten)]
    pub corpus: CorpusPath,
    /// Deduplicate the source files of a directory instead of a corpus.
    #[arg(long, conflicts_with = "corpus")]
    pub sources: Option<PathBuf>,
    /// Output directory; without it a corpus is rewritten in place and a
    /// sources directory is only reported on.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Similarity at or above which a later item is dropped.
    #[arg(long, default_value_t = 0.85)]
    pub threshold: f64,
    /// MinHash signature length.
    #[arg(long, default_value_t = 128)]
    pub num_hashes: usize,
    /// Tokens per shingle.
    #[arg(long, default_value_t = 5)]
    pub shingle_width: usize,
    /// Compare exact shingle-set Jaccard instead of MinHash estimates.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub corpus: CorpusPath,
    /// Knowledge library JSON.
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Shot examples JSON replacing the built-in set.
    #[arg(long)]
    pub shots_file: Option<PathBuf>,
    /// direct, plan, scot, scot_kare or karecoder.
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// In-context examples per stage (1 to 3).
    #[arg(long)]
    pub shots: Option<usize>,
    /// Candidates per problem.
    #[arg(long)]
    pub samples: Option<u32>,
    /// Sampling temperature (scot and scot_kare always use 0.8).
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Nucleus sampling mass (scot and scot_kare always use 0.95).
    #[arg(long)]
    pub top_p: Option<f64>,
    /// Completion length cap; unset leaves it to the service.
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Model identifier sent to the endpoint.
    #[arg(long)]
    pub model: Option<String>,
    /// description, pseudo_code or steps_of_pseudo_code.
    #[arg(long)]
    pub knowledge_format: Option<KnowledgeFormat>,
    /// Replaces the strategy's default system message.
    #[arg(long)]
    pub system_prompt: Option<String>,
    /// Completions drawn for the intermediate prompt.
    #[arg(long)]
    pub prompt_samples: Option<u32>,
    /// Ask the model for tags when a problem has none in the library.
    #[arg(long)]
    pub generate_tags: bool,
    /// Serve completions only from this transcript store.
    #[arg(long, group = "mode")]
    pub replay: Option<PathBuf>,
    /// Call the endpoint and save transcripts to this store.
    #[arg(long, group = "mode")]
    pub record: Option<PathBuf>,
    /// Call the endpoint without saving transcripts.
    #[arg(long, group = "mode")]
    pub live: bool,
    /// API root of an OpenAI-compatible service.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Runs file to append to.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Only these problem ids (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub problems: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Runs file produced by `generate`.
    #[arg(long)]
    pub runs: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusPath,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    pub k: Vec<u64>,
    /// Write the report JSON here; the table then goes to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the runs with their verdicts to this file.
    #[arg(long)]
    pub judged_out: Option<PathBuf>,
    /// Only runs of this strategy.
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[command(flatten)]
    pub judge: JudgeOpts,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Add Simple/Medium/Hard sub-tables.
    #[arg(long)]
    pub by_difficulty: bool,
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parse arguments and run, returning the process exit status.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run_from(std::env::args_os()))
}
