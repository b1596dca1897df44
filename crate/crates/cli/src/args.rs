use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "staggered", version, about = "Staggered-adoption treatment effect estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a raw long-format panel, optionally repair and transform it, and
    /// write the canonical panel.
    Ingest(IngestArgs),
    /// Generate a panel with known treatment effects.
    Simulate(SimulateArgs),
    /// Estimate an event study with one method.
    Estimate(EstimateArgs),
    /// Monte Carlo comparison of methods against simulated truth.
    Benchmark(BenchmarkArgs),
    /// Combine event-study files into comparison tables.
    Report(ReportArgs),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Ingest(a) => &a.common,
            Command::Simulate(a) => &a.common,
            Command::Estimate(a) => &a.common,
            Command::Benchmark(a) => &a.common,
            Command::Report(a) => &a.common,
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Directory for result files (created if needed).
    #[arg(long)]
    pub output: PathBuf,
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: PathBuf,
    /// JSON column mapping.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Replace negative per-period counts by spline interpolation.
    #[arg(long)]
    pub repair: bool,
    /// Apply the inverse hyperbolic sine to the outcome.
    #[arg(long)]
    pub asinh: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControlGroupArg {
    Never,
    Notyet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasePeriodArg {
    Varying,
    Universal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DrMethodArg {
    Dr,
    Or,
    Ipw,
}

/// Estimator flags shared by `estimate` and `benchmark`.
#[derive(Debug, Args, Default)]
pub struct EstimatorFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Confidence level of pointwise and simultaneous bands.
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, value_enum)]
    pub control_group: Option<ControlGroupArg>,
    /// Comma-separated covariate names.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Anticipation periods.
    #[arg(long)]
    pub anticipation: Option<u32>,
    #[arg(long, value_enum)]
    pub base_period: Option<BasePeriodArg>,
    #[arg(long, value_enum)]
    pub dr_method: Option<DrMethodArg>,
    /// Event window as `MIN,MAX`, e.g. `-8,12`.
    #[arg(long, allow_hyphen_values = true)]
    pub window: Option<String>,
    /// Multiplier-bootstrap replications (0 disables the simultaneous band).
    #[arg(long = "bootstrap-B")]
    pub bootstrap_b: Option<usize>,
    /// Ridge penalty of the synthetic control weights.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Pooling weight of the partially pooled synthetic control.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Match raw rather than pre-period de-meaned outcomes.
    #[arg(long)]
    pub no_demean: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: Common,
    /// One of nb, drdid, iwes, ascm.
    #[arg(long)]
    pub method: Option<String>,
    /// Panel CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// JSON column mapping; defaults to `schema.json` beside the input, then
    /// to the canonical column names.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[command(flatten)]
    pub flags: EstimatorFlags,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[command(flatten)]
    pub flags: EstimatorFlags,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Event-study CSV files (at least two).
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    /// Labels for the inputs, in order.
    #[arg(long)]
    pub label: Vec<String>,
}
