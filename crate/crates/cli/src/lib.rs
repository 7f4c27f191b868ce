//! The `mgtd` command line. `run` is the whole program; `main` only maps
//! its result to a process exit code.

mod commands;
pub mod config;
pub mod provider;
pub mod quickstart;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Seed used when neither `--seed` nor the config file sets one.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug)]
pub enum CliError {
    /// Help or version text was requested; not a failure.
    Help(String),
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    /// 0 help, 1 usage, 2 data, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Help(_) => 0,
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Help(m) => write!(f, "{m}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "mgtd", version, about = "Four-class machine-generated text detection toolkit")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Seed for every random choice [default: 42]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with defaults; command-line flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log level: error, warn, info, debug
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate machine-involved texts from a source manifest
    Generate(GenerateArgs),
    /// Print per-domain, per-class counts
    Stats(StatsArgs),
    /// Assign stratified train/dev/test splits
    Split(SplitArgs),
    /// Cap every (domain, class) stratum
    Balance(BalanceArgs),
    /// Train a detector, optionally domain-adversarial
    Train(TrainArgs),
    /// Score a model on a manifest split
    Evaluate(EvaluateArgs),
    /// Classify texts, one per line
    Predict(PredictArgs),
    /// Run the HTTP service
    Serve(ServeArgs),
    /// Run the whole pipeline
    #[command(name = "end-to-end", visible_alias = "end_to_end")]
    EndToEnd(EndToEndArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Target class: II, III or IV (names and codes also accepted)
    #[arg(long = "class")]
    pub class: String,
    /// Only use sources from this domain
    #[arg(long)]
    pub domain: Option<String>,
    /// mock, openai, groq, deepinfra or gemini
    #[arg(long, default_value = "mock")]
    pub provider: String,
    /// Model name for remote providers
    #[arg(long)]
    pub model_name: Option<String>,
    /// Source manifest
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Extra prompt templates (JSONL), added to the bundled catalog
    #[arg(long, value_name = "FILE")]
    pub catalog: Option<PathBuf>,
    /// Extra artifact phrases, one per line
    #[arg(long, value_name = "FILE")]
    pub phrases: Option<PathBuf>,
    /// Replaces the trailing instruction appended to every prompt
    #[arg(long)]
    pub trailing: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
    /// Requests per second per provider
    #[arg(long)]
    pub rate_limit: Option<f64>,
    #[arg(long, default_value_t = 3)]
    pub retries: usize,
    /// Per-job provenance (JSONL)
    #[arg(long, value_name = "FILE")]
    pub provenance: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Tab-separated rows instead of the aligned table
    #[arg(long)]
    pub tsv: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// train,dev,test fractions
    #[arg(long, default_value = "0.7,0.15,0.15")]
    pub ratios: String,
}

#[derive(Debug, Args)]
pub struct BalanceArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Maximum entries per (domain, class)
    #[arg(long)]
    pub cap: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// domain_specific or full_dataset
    #[arg(long, default_value = "full_dataset")]
    pub preset: String,
    /// Manifest with train and dev splits
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Domain-adversarial training
    #[arg(long)]
    pub dann: bool,
    /// Output directory for the model and reports
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// annealed or constant:<lambda>
    #[arg(long)]
    pub grl: Option<String>,
    /// adam or sgd
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Stop after this many epochs without a dev improvement
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub domain_head_lr_scale: Option<f64>,
    #[arg(long)]
    pub domain_head_weight_decay: Option<f64>,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 256)]
    pub ff: usize,
    #[arg(long, default_value_t = 512)]
    pub max_seq_len: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    #[arg(long, default_value_t = mgtd_core::neural::DEFAULT_MAX_VOCAB)]
    pub vocab_size: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// train, dev, test or all
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Directory for eval_report.json
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Print the confusion matrix as a text grid
    #[arg(long)]
    pub grid: bool,
    /// Write the confusion matrix as an SVG heatmap
    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,
    /// Add the human-vs-machine collapse row
    #[arg(long)]
    pub binary: bool,
    /// Add one row per domain
    #[arg(long)]
    pub by_domain: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// One text per line; `-` or absent reads stdin
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Lines are JSON objects with a `text` field
    #[arg(long)]
    pub jsonl: bool,
    /// Mark rejected texts instead of failing
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Manifest whose test split feeds the playground
    #[arg(long, value_name = "FILE")]
    pub pool: Option<PathBuf>,
    /// Directory with a web UI to host at /
    #[arg(long = "static", value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:7860")]
    pub addr: String,
    /// Idle playground sessions are dropped after this many seconds
    #[arg(long, default_value_t = 21600)]
    pub ttl_secs: u64,
    /// Session snapshot file, restored at start and written at shutdown
    #[arg(long, value_name = "FILE")]
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EndToEndArgs {
    /// Offline run on the bundled seed corpus with the mock provider
    #[arg(long)]
    pub quickstart: bool,
    #[arg(long, value_name = "DIR", default_value = "quickstart-out")]
    pub out: PathBuf,
    /// Human seed texts per domain
    #[arg(long, default_value_t = 20)]
    pub per_domain: usize,
}

fn init_logging(level: &str) -> Result<(), CliError> {
    let level: tracing::Level = level.parse().map_err(|_| CliError::Usage(format!("unknown log level {level:?}")))?;
    // A second init (tests call `run` repeatedly) is harmless.
    let _ = tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).with_target(false).try_init();
    Ok(())
}

/// Parses `args` (program name first), applies the config file and runs the
/// command. Output goes to `stdout`; diagnostics to stderr.
pub fn run_with<I, T>(args: I, stdout: &mut dyn std::io::Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = config::apply(args)?;
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => CliError::Help(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    })?;
    init_logging(&cli.log)?;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    commands::dispatch(cli.command, seed, stdout)
}

/// Exit code of a full invocation; help and version print and exit 0.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut out = std::io::stdout().lock();
    match run_with(args, &mut out) {
        Ok(()) => 0,
        Err(CliError::Help(m)) => {
            let _ = std::io::Write::write_all(&mut out, m.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
