//! `flowalert` command-line driver.
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 budget threshold
//! infeasible (the run still completes with a never-alert rule).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use flowalert::bocpd::BocpdConfig;
use flowalert::burnrate::BudgetConfig;
use flowalert::calibrate::CalibratorKind;
use flowalert::decide::CostSpec;
use flowalert::pipeline::{PipelineConfig, PipelineError, ThresholdMode, Variant};
use thiserror::Error;

pub mod commands;
pub mod data;
pub mod manifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] flowalert::ingest::IngestError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Synth(#[from] flowalert::synth::SynthError),
    #[error(transparent)]
    Metrics(#[from] flowalert::metrics::MetricsError),
    #[error(transparent)]
    Decide(#[from] flowalert::decide::DecideError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "flowalert",
    version,
    about = "Streaming change-point alerting for network flow records"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate a synthetic flow stream.
    Simulate(SimulateArgs),
    /// Fit on train/validation and stream the test split.
    Run(RunArgs),
    /// Compare the four variants over one shared scoring pass.
    Ablate(AblateArgs),
    /// Score-file metrics, reliability bins and a budget sweep.
    Evaluate(EvaluateArgs),
    /// Re-run a manifest and check its primary outputs are reproduced.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Run(_) => "run",
            Command::Ablate(_) => "ablate",
            Command::Evaluate(_) => "evaluate",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimKind {
    MeanShift,
    Regime,
    RareAttack,
    BaseRateInversion,
    BurstSustained,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub kind: SimKind,
    /// Output CSV path; the manifest goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of flows (per-kind default; ignored by burst-sustained).
    #[arg(long)]
    pub length: Option<usize>,
    /// Change-point index for mean-shift (default: length / 2).
    #[arg(long)]
    pub shift_at: Option<usize>,
    /// Attack prevalence for regime.
    #[arg(long, default_value_t = 0.05)]
    pub prevalence: f64,
    /// Feature dimension for regime.
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Flow CSV with a header row, sorted by timestamp.
    #[arg(long)]
    pub input: PathBuf,
    /// Timestamp column, in minutes.
    #[arg(long, default_value = "timestamp")]
    pub timestamp_col: String,
    /// Label column (0 benign, 1 attack); if absent from the file the stream is unlabelled.
    #[arg(long, default_value = "label")]
    pub label_col: String,
    /// Numeric feature columns (default: every column not named elsewhere).
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Categorical columns, one-hot encoded.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    /// Columns to ignore.
    #[arg(long, value_delimiter = ',')]
    pub drop: Vec<String>,
    /// Chronological train,validation,test fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.15,0.15")]
    pub split: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CalibratorArg {
    Isotonic,
    Platt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdModeArg {
    Variant,
    Conservative,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Maximum retained run length L.
    #[arg(long, default_value_t = BocpdConfig::DEFAULT_MAX_RUN_LENGTH)]
    pub max_run_length: usize,
    /// Constant hazard H.
    #[arg(long, default_value_t = BocpdConfig::DEFAULT_HAZARD)]
    pub hazard: f64,
    /// Warm-up flows W0 (state updates, no alerts).
    #[arg(long, default_value_t = BocpdConfig::DEFAULT_WARMUP)]
    pub warmup: usize,
    #[arg(long, default_value_t = BocpdConfig::DEFAULT_VARIANCE_FLOOR)]
    pub variance_floor: f64,
    #[arg(long, value_enum, default_value_t = CalibratorArg::Isotonic)]
    pub calibrator: CalibratorArg,
    /// C = C_FN / C_FP.
    #[arg(long, default_value_t = 10.0)]
    pub cost_ratio: f64,
    /// Alert budget: target false-positive rate.
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Error budget B (events per period).
    #[arg(long, default_value_t = 1000.0)]
    pub budget_events: f64,
    /// Budget period T in minutes.
    #[arg(long, default_value_t = 60.0)]
    pub budget_period: f64,
    #[arg(long, value_enum, default_value_t = ThresholdModeArg::Variant)]
    pub threshold_mode: ThresholdModeArg,
    /// Recorded in the manifest; the pipeline itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ModelArgs {
    pub fn pipeline_config(&self, dim: usize, variant: Variant) -> Result<PipelineConfig, CliError> {
        let mut config = PipelineConfig::new(dim, variant);
        config.bocpd.max_run_length = self.max_run_length;
        config.bocpd.hazard = self.hazard;
        config.bocpd.warmup = self.warmup;
        config.bocpd.variance_floor = self.variance_floor;
        config.calibrator = match self.calibrator {
            CalibratorArg::Isotonic => CalibratorKind::Isotonic,
            CalibratorArg::Platt => CalibratorKind::Platt,
        };
        config.costs = CostSpec::from_ratio(self.cost_ratio).map_err(|e| CliError::Usage(e.to_string()))?;
        config.alpha = self.alpha;
        config.budget =
            BudgetConfig::new(self.budget_events, self.budget_period).map_err(|e| CliError::Usage(e.to_string()))?;
        config.threshold_mode = match self.threshold_mode {
            ThresholdModeArg::Variant => ThresholdMode::Variant,
            ThresholdModeArg::Conservative => ThresholdMode::Conservative,
        };
        config.seed = self.seed;
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "V1")]
    pub variant: Variant,
    /// Also write per-flow burn rates for every level (`burn_trace.csv`).
    #[arg(long)]
    pub burn_trace: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Subset of variants, e.g. `V1,V4`.
    #[arg(long, value_delimiter = ',', default_value = "V1,V2,V3,V4")]
    pub variants: Vec<Variant>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// CSV with probability and label columns (e.g. `scores.csv` from `run`).
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value = "probability")]
    pub prob_col: String,
    #[arg(long, default_value = "label")]
    pub label_col: String,
    /// Rows tagged `validation` calibrate the sweep, `test` rows are scored.
    /// Without this column every row is scored and the sweep is skipped.
    #[arg(long, default_value = "split")]
    pub split_col: String,
    /// Fixed alert threshold (event iff p > τ); default is the cost threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub cost_ratio: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.005,0.01,0.05")]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = flowalert::metrics::ECE_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write the re-run outputs here instead of over the originals.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Parse `argv` (without the program name), execute, and return the exit code.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(std::iter::once("flowalert".to_string()).chain(argv.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command, &argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command, argv: &[String]) -> Result<i32, CliError> {
    match command {
        Command::Simulate(a) => commands::simulate(a, argv),
        Command::Run(a) => commands::run(a, argv),
        Command::Ablate(a) => commands::ablate(a, argv),
        Command::Evaluate(a) => commands::evaluate(a, argv),
        Command::Replay(a) => commands::replay(a),
    }
}
