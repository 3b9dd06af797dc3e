mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdsp_core::enumerate::EnumerationStrategy;
use pdsp_core::exec::{ExecMode, PlacementPolicy};
use pdsp_core::learn::ModelKind;

/// Parallel stream processing benchmark harness: workload generation,
/// parallelism enumeration, simulated execution and learned cost models.
#[derive(Debug, Parser)]
#[command(name = "pdsp", version)]
pub struct Cli {
    /// Harness config file (TOML); flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed overriding every seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate query plans and print per-structure counts.
    Generate(GenerateArgs),
    /// Assign parallelism degrees to base plans.
    Enumerate(EnumerateArgs),
    /// Execute plans and append labeled records to a corpus.
    Run(RunArgs),
    /// Median latency grouped by structure, parallelism category and cluster.
    Report(ReportArgs),
    /// Corpus utilities.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Train a cost model on a corpus's training split.
    Train(TrainArgs),
    /// Q-error of trained models on a corpus.
    Evaluate(EvaluateArgs),
    /// Train one model per strategy corpus and compare test q-error.
    CompareStrategies(CompareArgs),
    /// Run every stage end to end from a config.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Structure tags (linear, 2-chained-filter, 3-way-join, ...), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub structures: Vec<String>,
    /// Application codes (WC, AD, ...), comma separated.
    #[arg(long = "app", value_delimiter = ',')]
    pub apps: Vec<String>,
    /// Number of plans; defaults to one per listed structure.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value = "plans.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnumerationArgs {
    /// random, rule, exhaustive, minavgmax, increasing or parameter.
    #[arg(long)]
    pub strategy: Option<EnumerationStrategy>,
    #[arg(long)]
    pub degree_min: Option<u32>,
    #[arg(long)]
    pub degree_max: Option<u32>,
    /// Degrees for the parameter strategy, as op=k (comma separated or repeated).
    #[arg(long)]
    pub assign: Vec<String>,
    /// Most assignments taken per base plan (default: the config's value for
    /// random, unlimited otherwise).
    #[arg(long)]
    pub per_plan: Option<usize>,
    /// Tuples per second one core sustains, for the rule strategy.
    #[arg(long)]
    pub per_core_capacity: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub plans: PathBuf,
    #[command(flatten)]
    pub enumeration: EnumerationArgs,
    /// Cluster whose core count the rule strategy sizes against.
    #[arg(long)]
    pub cluster: Option<String>,
    #[arg(long, default_value = "enumerated.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExecArgs {
    /// sim or threads.
    #[arg(long)]
    pub mode: Option<ExecMode>,
    /// Runs per plan; the label is the mean of the run medians.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Event-time seconds per run.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Thread mode: wall seconds per simulated second.
    #[arg(long)]
    pub time_scale: Option<f64>,
    #[arg(long)]
    pub slots_per_core: Option<u32>,
    /// round_robin or capacity_weighted.
    #[arg(long)]
    pub placement: Option<PlacementPolicy>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub plans: PathBuf,
    /// Profile spec such as m510x10 or m510x5+c6320x5, or a TOML profile path.
    #[arg(long)]
    pub cluster: Option<String>,
    #[command(flatten)]
    pub enumeration: EnumerationArgs,
    #[command(flatten)]
    pub exec: ExecArgs,
    /// Corpus to append records to (created if missing).
    #[arg(long, default_value = "corpus.jsonl")]
    pub corpus: PathBuf,
    /// Per-plan latency summary CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Table,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, required = true)]
    pub corpus: Vec<PathBuf>,
    /// Comma-separated subset of structure,category,cluster.
    #[arg(long, default_value = "structure,category,cluster")]
    pub group_by: String,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Output file; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Write flat features and labels of every record as CSV.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// lr, mlp, rf, gnn or mean.
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Evaluate on every record instead of the test split.
    #[arg(long)]
    pub all: bool,
    /// Evaluation CSV; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-record predictions CSV.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Strategy corpora as PATH or NAME=PATH; at least two. Unnamed corpora
    /// take the strategy recorded in their first record.
    #[arg(long, required = true)]
    pub corpus: Vec<String>,
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Comparison CSV; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Output directory overriding the config's.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
