//! `firesynth`: train, sample, evaluate and replay synthetic intervention logs.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod config;
mod manifest;

/// Bad invocation or configuration: exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Quota not met within the draw budget: exit status 3, artifacts written.
#[derive(Debug)]
pub struct QuotaUnmet;

impl std::fmt::Display for QuotaUnmet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("draw budget exhausted before every area reached its floor")
    }
}

impl std::error::Error for QuotaUnmet {}

#[derive(Parser, Debug)]
#[command(
    name = "firesynth",
    version,
    about = "Synthetic firefighter intervention records: generation, evaluation, dispatch replay"
)]
pub struct Cli {
    /// Flat TOML file of option defaults; keys are long option names.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Validate a raw dataset, fit its schema and optionally assign zones.
    Ingest(IngestArgs),
    /// Write a deterministic surrogate dataset.
    Surrogate(SurrogateArgs),
    /// Train a diffusion generator.
    Train(TrainArgs),
    /// Draw synthetic records from a generator.
    Sample(SampleArgs),
    /// Draw until every area reaches its quota or the budget runs out.
    Oversample(OversampleArgs),
    /// Compare a synthetic dataset with the real one.
    Evaluate(EvaluateArgs),
    /// Replay interventions against stations and dispatch rules.
    Simulate(SimulateArgs),
    /// Gather several evaluations into comparison tables and figures.
    Report(ReportArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct Output {
    /// Output directory.
    #[arg(long, env = "FIRESYNTH_OUT", default_value = "firesynth-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct IngestArgs {
    /// Raw intervention CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Existing `zone,cx,cy` partition used to assign areas.
    #[arg(long, conflicts_with = "zone_count")]
    pub zones: Option<PathBuf>,
    /// Fit this many zones by k-means instead.
    #[arg(long)]
    pub zone_count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug, Serialize)]
pub struct SurrogateArgs {
    #[arg(short = 'n', long, default_value_t = 5000)]
    pub rows: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also fit this many zones and assign areas (0: none).
    #[arg(long, default_value_t = 0)]
    pub zone_count: usize,
    #[arg(long, default_value = "surrogate.csv")]
    pub file: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorChoice {
    /// Diffusion conditioned on the incident type.
    Tabdiff,
    /// Unconditional diffusion.
    Tinydiff,
    /// Whole rows redrawn with replacement.
    Shuffle,
    /// Each column drawn from its own marginal.
    Independent,
    /// Rows from a CSV produced by another toolkit.
    ExternalCsv,
}

impl GeneratorChoice {
    pub fn name(self) -> String {
        self.to_possible_value()
            .expect("no skipped variants")
            .get_name()
            .to_string()
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Linear,
    ScaledLinear,
    Cosine,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Schema to bind to instead of fitting one on `--data`.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GeneratorChoice::Tabdiff)]
    pub generator: GeneratorChoice,
    /// Diffusion steps T.
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = Schedule::ScaledLinear)]
    pub schedule: Schedule,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Keep the learning rate constant.
    #[arg(long)]
    pub no_lr_decay: bool,
    #[arg(long, default_value_t = 0.999)]
    pub ema_decay: f64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "256,256,256")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 32)]
    pub time_embedding: usize,
    #[arg(long, default_value_t = 16)]
    pub target_embedding: usize,
    /// Conditioning column for tabdiff.
    #[arg(long, default_value = "incident")]
    pub target: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "model.json")]
    pub file: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug, Serialize)]
pub struct GeneratorArgs {
    #[arg(long, value_enum, default_value_t = GeneratorChoice::Tabdiff)]
    pub generator: GeneratorChoice,
    /// Trained checkpoint (tabdiff, tinydiff).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset the baselines resample (shuffle, independent).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Rows from another toolkit (external-csv).
    #[arg(long)]
    pub external: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[arg(short = 'n', long, default_value_t = 5000)]
    pub rows: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pin the conditioning category (tabdiff only).
    #[arg(long)]
    pub condition: Option<u32>,
    /// Assign areas with this partition.
    #[arg(long)]
    pub zones: Option<PathBuf>,
    #[arg(long, default_value = "synthetic.csv")]
    pub file: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuotaChoice {
    /// Each area keeps its observed count.
    PerArea,
    /// Equal share per area.
    Uniform,
}

#[derive(Args, Debug, Serialize)]
pub struct OversampleArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Real dataset the targets come from; defaults to `--data`.
    #[arg(long)]
    pub real: Option<PathBuf>,
    #[arg(long)]
    pub zones: PathBuf,
    /// Explicit `zone,target` CSV instead of deriving targets.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = QuotaChoice::PerArea)]
    pub quota_mode: QuotaChoice,
    #[arg(long, default_value_t = firesynth::quota::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = firesynth::quota::DEFAULT_BUDGET_MULTIPLIER)]
    pub budget_multiplier: f64,
    #[arg(long, default_value_t = firesynth::quota::DEFAULT_BATCH)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "oversampled.csv")]
    pub file: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    pub real: PathBuf,
    pub fake: PathBuf,
    /// Schema to encode with instead of fitting one on the real data.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Assign areas to both sides with this partition.
    #[arg(long)]
    pub zones: Option<PathBuf>,
    #[arg(long, default_value = "synthetic")]
    pub label: String,
    #[arg(long, default_value_t = 5)]
    pub prdc_k: usize,
    #[arg(long, default_value_t = 10_000)]
    pub prdc_cap: usize,
    #[arg(long, default_value_t = 5_000)]
    pub mmd_cap: usize,
    #[arg(long, default_value_t = 1_000)]
    pub mmd_median_cap: usize,
    /// Fixed RBF bandwidth; the median heuristic when absent.
    #[arg(long)]
    pub mmd_bandwidth: Option<f64>,
    /// Add incident codes to the aggregate Wasserstein distance.
    #[arg(long)]
    pub include_categorical: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// Interventions to replay.
    #[arg(long)]
    pub data: PathBuf,
    /// Second intervention set to compare against the first.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long)]
    pub stations: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
    /// Straight-line travel speed in metres per minute.
    #[arg(long)]
    pub travel_speed: Option<f64>,
    #[arg(long, default_value = "a")]
    pub label: String,
    #[arg(long, default_value = "b")]
    pub compare_label: String,
    /// Log-scaled y axis on the per-type chart.
    #[arg(long)]
    pub log_scale: bool,
    /// Also write the full event trace.
    #[arg(long)]
    pub trace: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    /// `label=path` of a fidelity report JSON written by `evaluate`; repeatable.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<String>,
    #[command(flatten)]
    pub output: Output,
}

fn run(argv: Vec<OsString>) -> anyhow::Result<()> {
    let root = Cli::command();
    let config = config::config_path(&argv);
    let argv = match &config {
        Some(path) => config::merge(argv, &config::load(path)?, &root)?,
        None => argv,
    };
    let matches = root.try_get_matches_from(argv).unwrap_or_else(|e| e.exit());
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    commands::dispatch(cli)
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else if e.is::<QuotaUnmet>() {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
