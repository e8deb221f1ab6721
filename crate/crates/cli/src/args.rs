use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "openness",
    version,
    about = "Openness evaluation over precomputed embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "OPENNESS_THREADS")]
    pub threads: Option<usize>,

    /// Report path; the report goes to stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Include wall-clock timings in the report (they are always printed to stderr).
    #[arg(long, global = true)]
    pub record_timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed accuracy per vocabulary and Acc-C.
    EvalClosed(DataArgs),
    /// Acc-E by sampled or enumerated vocabulary orderings.
    EvalExtensibility(ExtensibilityArgs),
    /// Acc-S over all targets, or local stability for one target.
    EvalStability(StabilityArgs),
    /// Adversarial distractor vocabulary for one target vocabulary.
    Adversarial(AdversarialArgs),
    /// Alignment, uniformity, margin histogram, and similarity grid.
    Geometry(GeometryArgs),
    /// Checks the caption corpus and summarizes class-name coverage.
    RepeBuild(DataArgs),
    /// Retrieval-enhanced class features, with an optional before/after evaluation.
    RepeEnhance(RepeArgs),
    /// Lists dataset violations; exits 1 when there are any.
    Validate(DataArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::EvalClosed(_) => "eval-closed",
            Command::EvalExtensibility(_) => "eval-extensibility",
            Command::EvalStability(_) => "eval-stability",
            Command::Adversarial(_) => "adversarial",
            Command::Geometry(_) => "geometry",
            Command::RepeBuild(_) => "repe-build",
            Command::RepeEnhance(_) => "repe-enhance",
            Command::Validate(_) => "validate",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    #[arg(long)]
    pub manifest: PathBuf,

    /// Normalize every loaded matrix, overriding the manifest.
    #[arg(long)]
    pub normalize: bool,

    /// Make overlapping vocabularies disjoint (first occurrence keeps a class).
    #[arg(long)]
    pub dedup: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExtensibilityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Sampled orderings; defaults to 100 per vocabulary.
    #[arg(long, conflicts_with = "exact")]
    pub samples: Option<usize>,

    /// Enumerate all orderings instead of sampling.
    #[arg(long)]
    pub exact: bool,

    /// Largest vocabulary count accepted by --exact.
    #[arg(long, default_value_t = 6)]
    pub exact_threshold: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StabilityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Distractor orderings per target.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,

    /// Target vocabulary label (or index) for local stability only.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    TopK,
    Greedy,
    Exhaustive,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AdversarialArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,

    /// Target vocabulary label (or index).
    #[arg(long)]
    pub target: String,

    /// Candidate words, one per line.
    #[arg(long)]
    pub lexicon: PathBuf,

    /// Container with one text feature per lexicon line.
    #[arg(long)]
    pub lexicon_features: PathBuf,

    #[arg(long, default_value_t = 3)]
    pub size: usize,

    #[arg(long, value_enum, default_value_t = StrategyArg::TopK)]
    pub strategy: StrategyArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GeometryArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 200)]
    pub bins: usize,

    /// Class ids for the similarity grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid_classes: Vec<u32>,

    #[arg(long, default_value_t = 100)]
    pub grid_samples: usize,

    /// Row count above which uniformity is estimated from sampled pairs.
    #[arg(long, default_value_t = 20_000)]
    pub uniformity_exact_limit: usize,

    #[arg(long, default_value_t = 200_000_000)]
    pub uniformity_pairs: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RepeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,

    /// Captions kept per class after name filtering.
    #[arg(long, default_value_t = 100)]
    pub k: usize,

    /// Retrieval depth before name filtering.
    #[arg(long, default_value_t = 1000)]
    pub pool: usize,

    #[arg(long, default_value_t = 0.25)]
    pub lambda: f64,

    /// Where to write the enhanced class features container.
    #[arg(long)]
    #[serde(skip)]
    pub features_out: Option<PathBuf>,

    /// Also run closed, extensibility, and stability evaluation before and after.
    #[arg(long)]
    pub evaluate: bool,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
