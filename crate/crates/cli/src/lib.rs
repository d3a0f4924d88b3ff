//! Batch commands over the extraction pipeline: `ingest`, `run`,
//! `evaluate` and `meta-analyze`.

mod error;
mod evaluate;
mod ingest;
mod io;
mod meta;
mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, ExitKind};

#[derive(Debug, Parser)]
#[command(name = "rctmeta", version, about = "Extract numerical trial findings and pool them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert trial reports to markdown documents.
    Ingest(IngestArgs),
    /// Extract findings for every record with a model.
    Run(RunArgs),
    /// Score traces against the reference annotations.
    Evaluate(EvaluateArgs),
    /// Pool matching records and draw a forest plot.
    MetaAnalyze(MetaArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Dev,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// Annotation file (.csv or .jsonl), or a directory holding `<split>.csv` or `<split>.jsonl`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Split to load when `--dataset` is a directory.
    #[arg(long, value_enum, default_value_t = Split::Dev)]
    pub split: Split,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// Directory of article XML or markdown files named `<id>.xml` or `<id>.md`.
    #[arg(long)]
    pub docs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Annotations whose documents must all be present.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Dev)]
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Live,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtractType {
    /// Extract with the type the model inferred.
    Inferred,
    /// Infer the type but extract with the reference type.
    Reference,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Directory of documents (`<id>.md` or `<id>.xml`).
    #[arg(long)]
    pub docs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub model: String,
    /// Base URL of an OpenAI-compatible API.
    #[arg(long, default_value = "https://api.openai.com/v1")]
    pub endpoint: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    pub api_key_env: String,
    #[arg(long, value_enum, default_value_t = Mode::Live)]
    pub mode: Mode,
    /// Response cache; required for replay, defaults to `<out>/cache` when live.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    #[arg(long, default_value_t = 8192)]
    pub max_context_tokens: usize,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 120)]
    pub timeout: u64,
    #[arg(long, value_enum, default_value_t = ExtractType::Inferred)]
    pub extract_type: ExtractType,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Output directory of a previous `run`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MetaArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Output directory; model findings are read from its `traces.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    /// Pool the reference annotations instead of model findings.
    #[arg(long)]
    pub use_reference: bool,
    #[arg(long)]
    pub intervention: Option<String>,
    #[arg(long)]
    pub comparator: Option<String>,
    #[arg(long)]
    pub outcome: Option<String>,
    /// Compare ICO filter strings case-insensitively.
    #[arg(long)]
    pub ignore_case: bool,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(args) => ingest::cmd_ingest(&args),
        Command::Run(args) => run::cmd_run(&args),
        Command::Evaluate(args) => evaluate::cmd_evaluate(&args),
        Command::MetaAnalyze(args) => meta::cmd_meta_analyze(&args),
    }
}
