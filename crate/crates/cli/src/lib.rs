//! The `factgpt` command-line driver. Each subcommand reads and writes the
//! JSON-lines record formats and leaves a `<output>.manifest.json` with
//! input/output hashes and the resolved configuration.

mod commands;
pub mod error;
pub mod run;
pub mod settings;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use factgpt_core::evalkit::{TiePolicy, UnparseablePolicy};
use serde_json::Value;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "factgpt",
    version,
    about = "Claim matching, synthetic training data and entailment classification for fact-checking"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// `mock` (offline, deterministic) or `live`.
    #[arg(long, global = true, env = "FACTGPT_PROVIDER", value_parser = ["mock", "live"])]
    pub provider: Option<String>,
    /// Live provider profile: openai or huggingface.
    #[arg(long, global = true, env = "FACTGPT_PROFILE")]
    pub profile: Option<String>,
    #[arg(long, global = true, env = "FACTGPT_API_BASE")]
    pub api_base: Option<String>,
    #[arg(long, global = true, env = "FACTGPT_SEED")]
    pub seed: Option<u64>,
    /// TOML file with default values for any flag.
    #[arg(long, global = true, env = "FACTGPT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Print a JSON summary on stdout and JSON errors on stderr.
    #[arg(long, global = true)]
    pub json: bool,
    /// Validate inputs and report what would be written, without writing.
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Validate and de-duplicate claims into a JSON-lines file and/or a service store.
    IngestClaims(IngestClaimsArgs),
    /// Rank claims for each post and write candidate pairs.
    Pair(PairArgs),
    /// Generate one synthetic tweet per (claim, label).
    Generate(GenerateArgs),
    /// Split synthetic examples and export chat-format fine-tuning files.
    ExportFinetune(ExportArgs),
    /// Submit a fine-tuning job, or run generate/split/export/submit end to end.
    Finetune(FinetuneArgs),
    /// Label candidate pairs with a chat model.
    Classify(ClassifyArgs),
    /// Majority-vote annotator labels into gold labels and a distribution table.
    Aggregate(AggregateArgs),
    /// Score predictions against gold labels.
    Evaluate(EvaluateArgs),
    /// Render stored evaluation results as markdown.
    Report(ReportArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct IngestClaimsArgs {
    /// JSON-lines claims; `id` is optional.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, alias = "store", env = "FACTGPT_STORE_DIR")]
    pub store_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MatcherArgs {
    #[arg(long, env = "FACTGPT_ALPHA")]
    pub alpha: Option<f64>,
    #[arg(long, env = "FACTGPT_TOP_K")]
    pub top_k: Option<usize>,
    #[arg(long, env = "FACTGPT_MIN_COMBINED_SCORE")]
    pub min_combined_score: Option<f64>,
    /// `hashed-ngram` (offline) or `remote` (provider embeddings).
    #[arg(long, env = "FACTGPT_EMBEDDER_ID")]
    pub embedder_id: Option<String>,
    #[arg(long, env = "FACTGPT_EMBEDDING_MODEL")]
    pub embedding_model: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub posts: PathBuf,
    #[arg(long)]
    pub claims: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub matcher: MatcherArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub claims: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, alias = "model", env = "FACTGPT_GENERATOR_MODEL")]
    pub generator_model: Option<String>,
    #[arg(long, env = "FACTGPT_PARALLELISM")]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub examples: PathBuf,
    #[arg(long)]
    pub claims: PathBuf,
    /// Receives train.jsonl, validation.jsonl, finetune_train.jsonl and finetune_validation.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, env = "FACTGPT_TRAIN_FRACTION")]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FinetuneArgs {
    /// Chat-format training file to submit as is.
    #[arg(long, conflicts_with_all = ["claims", "work_dir"])]
    pub training_file: Option<PathBuf>,
    /// Claims to run the whole resumable pipeline on (needs --work-dir).
    #[arg(long, requires = "work_dir")]
    pub claims: Option<PathBuf>,
    #[arg(long, requires = "claims")]
    pub work_dir: Option<PathBuf>,
    /// Where to write the job record when submitting a training file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "FACTGPT_BASE_MODEL")]
    pub base_model: Option<String>,
    #[arg(long, alias = "model", env = "FACTGPT_GENERATOR_MODEL")]
    pub generator_model: Option<String>,
    #[arg(long, env = "FACTGPT_EPOCHS")]
    pub epochs: Option<u32>,
    #[arg(long, env = "FACTGPT_TRAIN_FRACTION")]
    pub train_fraction: Option<f64>,
    #[arg(long, env = "FACTGPT_PARALLELISM")]
    pub parallelism: Option<usize>,
    /// Return right after submission instead of polling to completion.
    #[arg(long)]
    pub no_wait: bool,
    #[arg(long, env = "FACTGPT_POLL_INTERVAL_SECS")]
    pub poll_interval_secs: Option<u64>,
    #[arg(long, env = "FACTGPT_MAX_POLLS")]
    pub max_polls: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub posts: PathBuf,
    #[arg(long)]
    pub claims: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, alias = "model", env = "FACTGPT_CLASSIFIER_MODEL")]
    pub classifier_model: Option<String>,
    #[arg(long, env = "FACTGPT_PARALLELISM")]
    pub parallelism: Option<usize>,
    /// Finished predictions are appended here and skipped on re-runs.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Also queue the classified pairs for review in this service store.
    #[arg(long, alias = "store", env = "FACTGPT_STORE_DIR")]
    pub store_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub votes: PathBuf,
    /// Gold labels, JSON-lines.
    #[arg(long)]
    pub out: PathBuf,
    /// Markdown distribution table; printed to stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn parse_tie_policy(s: &str) -> Result<TiePolicy, String> {
    serde_json::from_value(Value::String(s.into()))
        .map_err(|_| "expected exclude or credit-either".to_string())
}

fn parse_unparseable_policy(s: &str) -> Result<UnparseablePolicy, String> {
    serde_json::from_value(Value::String(s.into()))
        .map_err(|_| "expected count-wrong or exclude".to_string())
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gold: PathBuf,
    /// Prediction files; predictions are grouped by model_id.
    #[arg(long = "pred", required = true)]
    pub preds: Vec<PathBuf>,
    /// Markdown report.
    #[arg(long)]
    pub out: PathBuf,
    /// Machine-readable report (list of per-model results).
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    #[arg(long, env = "FACTGPT_TIE_POLICY", value_parser = parse_tie_policy)]
    pub tie_policy: Option<TiePolicy>,
    #[arg(long, env = "FACTGPT_UNPARSEABLE_POLICY", value_parser = parse_unparseable_policy)]
    pub unparseable_policy: Option<UnparseablePolicy>,
    /// MODEL=SOURCE: the model whose synthetic data fine-tuned MODEL.
    #[arg(long)]
    pub train_set_from: Vec<String>,
    /// Also store the results for the service's reports endpoint.
    #[arg(long, alias = "store", env = "FACTGPT_STORE_DIR")]
    pub store_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// JSON written by `evaluate --json-out`.
    #[arg(long = "reports")]
    pub reports: Vec<PathBuf>,
    /// Render the latest report stored in this service store instead.
    #[arg(long, alias = "store", env = "FACTGPT_STORE_DIR")]
    pub store_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, env = "FACTGPT_BIND")]
    pub bind: Option<String>,
    #[arg(long, env = "FACTGPT_PORT")]
    pub port: Option<u16>,
    #[arg(long, alias = "store", env = "FACTGPT_STORE_DIR")]
    pub store_dir: Option<PathBuf>,
    #[arg(long, env = "FACTGPT_STATIC_DIR")]
    pub static_dir: Option<PathBuf>,
    #[arg(long, env = "FACTGPT_CORS_ORIGIN")]
    pub cors_origin: Option<String>,
    #[arg(long, env = "FACTGPT_CLASSIFIER_MODEL")]
    pub classifier_model: Option<String>,
    #[command(flatten)]
    pub matcher: MatcherArgs,
}

/// What a successful subcommand hands back to `main`.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Value,
    /// Text meant for stdout when no output file was requested.
    pub stdout: Option<String>,
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    commands::dispatch(cli)
}
