//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug, Clone)]
#[command(
    name = "rkhs-iv",
    version,
    about = "Average marginal effects in partially linear IV models: one-step RKHS estimation with Bayesian-bootstrap inference"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Select the penalty (unless given) and estimate the AME.
    Estimate(EstimateArgs),
    /// Bootstrap test of AME = theta0 at each level.
    Test(TestArgs),
    /// Confidence intervals for the AME by test inversion.
    Ci(CiArgs),
    /// Cross-validation criterion over the penalty grid.
    Cv(CvArgs),
    /// Monte Carlo size and power experiments, or one simulated sample.
    Simulate(SimulateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditioningArg {
    /// Covariates and instruments.
    Xw,
    /// Instruments only (for endogenous covariates).
    W,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelArg {
    Gaussian,
    Sobolev1,
    Sobolev2,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MuArg {
    Laplace,
    Gaussian,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Human-readable table.
    Table,
    /// Machine-readable CSV.
    Csv,
    /// Structured JSON report with a fixed key order.
    Report,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailMode {
    /// Quantiles of |theta_b - theta_hat|.
    Symmetric,
    /// Separate alpha/2 and 1 - alpha/2 quantiles of theta_b - theta_hat.
    EqualTail,
}

/// Penalty grid given as `min,max,count`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct GridArg {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

fn parse_grid(s: &str) -> Result<GridArg, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err("expected min,max,count".into());
    }
    let min = parts[0].parse::<f64>().map_err(|e| format!("min: {e}"))?;
    let max = parts[1].parse::<f64>().map_err(|e| format!("max: {e}"))?;
    let count = parts[2]
        .parse::<usize>()
        .map_err(|e| format!("count: {e}"))?;
    Ok(GridArg { min, max, count })
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Outcome column.
    #[arg(long)]
    pub y: String,
    /// Endogenous treatment column.
    #[arg(long)]
    pub z: String,
    /// Exogenous covariate columns (comma list).
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<String>,
    /// Instrument columns (comma list).
    #[arg(long, value_delimiter = ',', required = true)]
    pub w: Vec<String>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ModelArgs {
    /// Fixed penalty; skips cross-validation.
    #[arg(long, conflicts_with = "lambda_grid")]
    pub lambda: Option<f64>,
    /// Cross-validation grid `min,max,count` (geometric).
    #[arg(long = "lambda-grid", value_parser = parse_grid)]
    pub lambda_grid: Option<GridArg>,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub standardize: Switch,
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub intercept: Switch,
    #[arg(long, value_enum, default_value_t = ConditioningArg::Xw)]
    pub conditioning: ConditioningArg,
    #[arg(long, value_enum, default_value_t = KernelArg::Gaussian)]
    pub kernel: KernelArg,
    /// Gaussian kernel length scale on the (standardized) treatment.
    #[arg(long = "length-scale", default_value_t = 1.0)]
    pub length_scale: f64,
    #[arg(long, value_enum, default_value_t = MuArg::Laplace)]
    pub mu: MuArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for bootstrap, grid and Monte Carlo loops.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OutputArgs {
    /// Write the output here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BootstrapArgs {
    /// Bootstrap replications.
    #[arg(long = "B", default_value_t = 499)]
    pub b: usize,
    /// Levels (comma list).
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.05, 0.10])]
    pub alpha: Vec<f64>,
    #[arg(long, value_enum, default_value_t = TailMode::Symmetric)]
    pub tails: TailMode,
}

#[derive(Args, Debug, Clone)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
    /// Hypothesized AME.
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct CiArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Rejection rates under the null.
    Size,
    /// Rejection rates along a grid of deviations from the null.
    Power,
    /// Write one simulated sample as CSV.
    Sample,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignArg {
    Nonparametric,
    PartiallyLinear,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum H0Arg {
    Quadratic,
    Nonpolynomial,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum McModeArg {
    /// One bootstrap draw per replication, pooled.
    Warp,
    /// A full bootstrap of size --B inside every replication.
    Full,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Experiment::Size)]
    pub experiment: Experiment,
    #[arg(long, value_enum, default_value_t = DesignArg::Nonparametric)]
    pub design: DesignArg,
    #[arg(long, value_enum, default_value_t = H0Arg::Quadratic)]
    pub h0: H0Arg,
    /// Endogeneity: correlation of the structural and first-stage errors.
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Instrument strength: correlation of treatment and instrument.
    #[arg(long = "rho-zw", default_value_t = 0.8)]
    pub rho_zw: f64,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Monte Carlo replications.
    #[arg(long = "R", default_value_t = 1000)]
    pub r: usize,
    /// Deviations from the true AME for the power curve (comma list).
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])]
    pub gamma: Vec<f64>,
    #[arg(long = "mc-mode", value_enum, default_value_t = McModeArg::Warp)]
    pub mc_mode: McModeArg,
    /// Bootstrap draws per replication in full mode.
    #[arg(long = "B", default_value_t = 499)]
    #[serde(rename = "B")]
    pub b: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.05, 0.10])]
    pub alpha: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}
