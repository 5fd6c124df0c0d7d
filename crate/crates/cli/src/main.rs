//! `essence-coach`: ingest the corpus, build indexes, chat, serve the HTTP API
//! and run the evaluation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or configuration error,
//! 3 provider or embedding backend failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coach_core::chat::ChatError;
use coach_core::generation::{Event, Role};
use coach_core::CoachError;

#[derive(Debug, Parser)]
#[command(
    name = "essence-coach",
    version,
    about = "Retrieval-augmented coach for Essence and software practices"
)]
pub struct Cli {
    /// TOML config file. Falls back to $ESSENCE_COACH_CONFIG, then built-in defaults.
    #[arg(long, global = true, env = "ESSENCE_COACH_CONFIG")]
    pub config: Option<PathBuf>,

    /// Overrides the corpus manifest from the config.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    /// Overrides the data directory (index snapshots and sessions).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,

    /// Contexts taken from each retrieval method.
    #[arg(long, global = true)]
    pub k_each: Option<usize>,

    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the manifest and write chunks.jsonl.
    Ingest,
    /// Chunk the corpus and build both retrieval indexes.
    Index,
    /// Show the fused contexts for a query.
    Retrieve { query: String },
    /// Send one message and print the reply.
    Ask(AskArgs),
    /// Run the HTTP/JSON service.
    Serve(ServeArgs),
    /// Score retrieval against relevance judgments.
    EvalRetrieval(EvalRetrievalArgs),
    /// Post every question to each model configuration and score the answers.
    Experiment(ExperimentArgs),
    /// Re-score saved experiment runs against reference answers.
    EvalResponses(EvalResponsesArgs),
    /// Render the result tables from an experiment directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct AskArgs {
    pub question: String,
    /// Continue an existing session instead of opening a new one.
    #[arg(long)]
    pub session: Option<String>,
    #[arg(long, overrides_with = "no_rag")]
    pub rag: bool,
    /// Answer from the model alone, without retrieved contexts.
    #[arg(long)]
    pub no_rag: bool,
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long, value_enum)]
    pub role: Option<RoleArg>,
    #[arg(long, value_enum)]
    pub event: Option<EventArg>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct EvalRetrievalArgs {
    #[arg(long)]
    pub questions: PathBuf,
    #[arg(long)]
    pub judgments: PathBuf,
    /// Score contexts logged by a saved experiment instead of retrieving live.
    #[arg(long)]
    pub runs: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Write the report as JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub questions: PathBuf,
    /// Model configuration as `ID=PROVIDER:rag` or `ID=PROVIDER:base`.
    /// Defaults to a RAG and a baseline config per provider.
    #[arg(long = "model")]
    pub models: Vec<String>,
    #[arg(long)]
    pub judgments: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Output directory for runs.json, contexts.csv and report.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalResponsesArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub questions: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Experiment output directory.
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub questions: PathBuf,
    #[arg(long)]
    pub judgments: Option<PathBuf>,
    /// Human scores CSV.
    #[arg(long)]
    pub human: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RoleArg {
    ScrumMaster,
    ProductOwner,
    Developer,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::ScrumMaster => Role::ScrumMaster,
            RoleArg::ProductOwner => Role::ProductOwner,
            RoleArg::Developer => Role::Developer,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EventArg {
    SprintPlanning,
    Retrospective,
    DailyStandup,
    SprintReview,
}

impl From<EventArg> for Event {
    fn from(e: EventArg) -> Self {
        match e {
            EventArg::SprintPlanning => Event::SprintPlanning,
            EventArg::Retrospective => Event::Retrospective,
            EventArg::DailyStandup => Event::DailyStandup,
            EventArg::SprintReview => Event::SprintReview,
        }
    }
}

/// A failure mapped to a process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Provider(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Provider(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Provider(m) => m,
        }
    }
}

impl From<CoachError> for CliError {
    fn from(e: CoachError) -> Self {
        match e {
            CoachError::Embedding { .. } => CliError::Provider(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ChatError> for CliError {
    fn from(e: ChatError) -> Self {
        match e {
            ChatError::Provider(p) => CliError::Provider(p.to_string()),
            ChatError::Storage(c) => c.into(),
            ChatError::IndexNotReady => CliError::Data(
                "retrieval index is not built; run `essence-coach index` first".into(),
            ),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
