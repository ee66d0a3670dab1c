//! Structured results of every command. Field order is the serialization
//! order, so reports are byte-stable for equal inputs.

use serde::Serialize;

use rkhs_iv::simulation::SimReport;

#[derive(Clone, Debug, Serialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DataSummary {
    pub input: String,
    pub rows_read: usize,
    pub dropped_rows: usize,
    pub n: usize,
    pub y: String,
    pub z: String,
    pub x: Vec<String>,
    pub w: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridPoint {
    pub lambda: f64,
    /// `None` where the fold fits failed.
    pub criterion: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CvSummary {
    pub selected_lambda: f64,
    pub selected_index: usize,
    pub fold_sizes: [usize; 2],
    pub grid: Vec<GridPoint>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitSummary {
    pub lambda: f64,
    /// `"cv"` or `"fixed"`.
    pub lambda_source: &'static str,
    /// Absent for kernels without a derivative.
    pub theta_hat: Option<f64>,
    pub beta: Vec<NamedValue>,
    pub foc_residual: f64,
    pub rhs_norm: f64,
    pub effective_rank: usize,
    pub rank_deficient: bool,
    pub duplicate_treatment: bool,
    pub duplicate_conditioning: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelResult {
    pub alpha: f64,
    pub q_hat: f64,
    pub c_hat: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Present for `test` only.
    pub reject: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InferenceSummary {
    pub replications: usize,
    pub tails: &'static str,
    pub theta_h0: Option<f64>,
    pub p_value: Option<f64>,
    pub few_replications: bool,
    pub levels: Vec<LevelResult>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: serde_json::Value,
    pub data: Option<DataSummary>,
    pub cv: Option<CvSummary>,
    pub fit: Option<FitSummary>,
    pub inference: Option<InferenceSummary>,
    pub simulation: Option<SimReport>,
    pub warnings: Vec<String>,
    /// Excluded from the reproducibility guarantee.
    pub wall_time_secs: f64,
}

impl Report {
    pub fn new(command: &'static str, config: serde_json::Value) -> Self {
        Self {
            tool: "rkhs-iv",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            data: None,
            cv: None,
            fit: None,
            inference: None,
            simulation: None,
            warnings: Vec::new(),
            wall_time_secs: 0.0,
        }
    }
}
