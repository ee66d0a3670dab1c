//! Simulation designs with an endogenous treatment, their true AMEs, and
//! warp-speed Monte Carlo experiments for size and power.
//!
//! With `(W, V, U)` independent standard normals,
//!
//! ```text
//! Z = (b W + V) / sqrt(1 + b^2),   eps = (a V + U) / sqrt(1 + a^2),
//! a = sqrt(rho_eps_v^2 / (1 - rho_eps_v^2)),   b = sqrt(rho_zw^2 / (1 - rho_zw^2)),
//! ```
//!
//! so `Z` and `eps` are standard normal, `Corr(Z, W) = rho_zw` and
//! `Corr(eps, V) = rho_eps_v`. The outcome is `Y = h0(Z) + eps`, plus
//! `beta_x X` in the partially linear design, where `(X, W)` are jointly
//! normal with correlation `corr_xw`.
//!
//! In warp-speed mode every replication contributes one bootstrap draw, and
//! the pooled `|theta_b,r - theta_r|` across replications form the reference
//! distribution for all replications.

use std::io::{self, Write};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::{fit, Dataset, FitConfig};
use crate::exec::{try_map_indexed, Execution};
use crate::inference::{
    bootstrap_theta, draw_weights, BootstrapConfig, BootstrapDistribution, WeightFamily,
};
use crate::numerics::{empirical_quantile, RandomStream};
use crate::selection::{select_lambda, LambdaGrid};

/// Below this many replications a report is flagged as indicative only.
pub const MIN_REPLICATIONS: usize = 100;

/// Stream labels for the pieces of one replication.
const FOLD_LABEL: u64 = 1;
const BOOTSTRAP_LABEL: u64 = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DgpDesign {
    #[default]
    FullyNonparametric,
    PartiallyLinear,
}

impl DgpDesign {
    pub fn label(self) -> &'static str {
        match self {
            DgpDesign::FullyNonparametric => "fully_nonparametric",
            DgpDesign::PartiallyLinear => "partially_linear",
        }
    }
}

/// Structural treatment functions, both with unit variance under `N(0, 1)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreatmentFunction {
    /// `z^2 / sqrt 2`.
    #[default]
    Quadratic,
    /// `sqrt(3 sqrt 3) z exp(-z^2 / 2)`.
    NonPolynomial,
}

/// `sqrt(3 sqrt 3) = 3^(3/4)`.
fn nonpolynomial_scale() -> f64 {
    3f64.powf(0.75)
}

impl TreatmentFunction {
    pub fn label(self) -> &'static str {
        match self {
            TreatmentFunction::Quadratic => "quadratic",
            TreatmentFunction::NonPolynomial => "nonpolynomial",
        }
    }

    pub fn value(self, z: f64) -> f64 {
        match self {
            TreatmentFunction::Quadratic => z * z * std::f64::consts::FRAC_1_SQRT_2,
            TreatmentFunction::NonPolynomial => nonpolynomial_scale() * z * (-0.5 * z * z).exp(),
        }
    }

    pub fn deriv(self, z: f64) -> f64 {
        match self {
            TreatmentFunction::Quadratic => std::f64::consts::SQRT_2 * z,
            TreatmentFunction::NonPolynomial => {
                nonpolynomial_scale() * (1.0 - z * z) * (-0.5 * z * z).exp()
            }
        }
    }

    /// `E[h0'(Z)]` for `Z ~ N(0, 1)`.
    pub fn true_ame(self) -> f64 {
        match self {
            TreatmentFunction::Quadratic => 0.0,
            // E[(1 - Z^2) exp(-Z^2/2)] = 1/sqrt 2 - 1/(2 sqrt 2) = 1/(2 sqrt 2).
            TreatmentFunction::NonPolynomial => {
                nonpolynomial_scale() / (2.0 * std::f64::consts::SQRT_2)
            }
        }
    }
}

pub fn h0_value(h0: TreatmentFunction, z: f64) -> f64 {
    h0.value(z)
}

pub fn h0_deriv(h0: TreatmentFunction, z: f64) -> f64 {
    h0.deriv(z)
}

pub fn true_ame(h0: TreatmentFunction) -> f64 {
    h0.true_ame()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub design: DgpDesign,
    pub h0: TreatmentFunction,
    /// Correlation between the structural error and the first-stage error.
    pub rho_eps_v: f64,
    /// Correlation between treatment and instrument.
    pub rho_zw: f64,
    pub n: usize,
    /// Slope on `X` in the partially linear design.
    pub beta_x: f64,
    /// Correlation of `X` and `W` in the partially linear design.
    pub corr_xw: f64,
}

impl DgpSpec {
    pub fn new(h0: TreatmentFunction, rho_eps_v: f64, n: usize) -> Self {
        Self {
            design: DgpDesign::FullyNonparametric,
            h0,
            rho_eps_v,
            rho_zw: 0.8,
            n,
            beta_x: 1.0,
            corr_xw: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho_eps_v) {
            return Err(Error::Config(format!(
                "rho_eps_v must lie in [0,1), got {}",
                self.rho_eps_v
            )));
        }
        if !(self.rho_zw > 0.0 && self.rho_zw < 1.0) {
            return Err(Error::Config(format!(
                "rho_zw must lie in (0,1), got {}",
                self.rho_zw
            )));
        }
        if !(self.corr_xw > -1.0 && self.corr_xw < 1.0) {
            return Err(Error::Config(format!(
                "corr_xw must lie in (-1,1), got {}",
                self.corr_xw
            )));
        }
        if !self.beta_x.is_finite() {
            return Err(Error::Config("beta_x must be finite".into()));
        }
        if self.n < 4 {
            return Err(Error::Config(format!(
                "sample size must be at least 4, got {}",
                self.n
            )));
        }
        Ok(())
    }

    /// Loading of `V` in the structural error.
    pub fn a(&self) -> f64 {
        (self.rho_eps_v.powi(2) / (1.0 - self.rho_eps_v.powi(2))).sqrt()
    }

    /// Loading of `W` in the treatment.
    pub fn b(&self) -> f64 {
        (self.rho_zw.powi(2) / (1.0 - self.rho_zw.powi(2))).sqrt()
    }

    pub fn true_ame(&self) -> f64 {
        self.h0.true_ame()
    }
}

/// One sample from the design. Row `i` uses the `i`-th block of draws from
/// `stream`, so equal streams give identical samples.
pub fn draw_sample(spec: &DgpSpec, stream: RandomStream) -> Dataset {
    let mut rng = stream.rng();
    let n = spec.n;
    let (a, b) = (spec.a(), spec.b());
    let (sa, sb) = ((1.0 + a * a).sqrt(), (1.0 + b * b).sqrt());
    let linear = spec.design == DgpDesign::PartiallyLinear;
    let mut y = DVector::zeros(n);
    let mut z = DVector::zeros(n);
    let mut x = DMatrix::zeros(n, usize::from(linear));
    let mut w = DMatrix::zeros(n, 1);
    let rho = spec.corr_xw;
    for i in 0..n {
        let e1: f64 = StandardNormal.sample(&mut rng);
        let v: f64 = StandardNormal.sample(&mut rng);
        let u: f64 = StandardNormal.sample(&mut rng);
        let (wi, xi) = if linear {
            let e2: f64 = StandardNormal.sample(&mut rng);
            (rho * e2 + (1.0 - rho * rho).sqrt() * e1, e2)
        } else {
            (e1, 0.0)
        };
        let zi = (b * wi + v) / sb;
        let eps = (a * v + u) / sa;
        z[i] = zi;
        w[(i, 0)] = wi;
        y[i] = spec.h0.value(zi) + eps;
        if linear {
            x[(i, 0)] = xi;
            y[i] += spec.beta_x * xi;
        }
    }
    Dataset { y, z, x, w }
}

/// Linear IV estimate of the treatment slope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSlsEstimate {
    pub slope: f64,
    /// Heteroskedasticity-robust (HC0) standard error.
    pub std_error: f64,
}

/// Two-stage least squares of `Y` on `(1, Z, X)` with instruments `(1, W, X)`.
pub fn two_stage_least_squares(data: &Dataset) -> Result<TwoSlsEstimate> {
    let n = data.n();
    let ones = DMatrix::from_element(n, 1, 1.0);
    let z = DMatrix::from_column_slice(n, 1, data.z.as_slice());
    let regressors = concat_columns(&[&ones, &z, &data.x]);
    let instruments = concat_columns(&[&ones, &data.w, &data.x]);
    let k = regressors.ncols();
    if n <= k {
        return Err(Error::InsufficientData {
            needed: k + 1,
            available: n,
        });
    }
    let ww = instruments.transpose() * &instruments;
    let ww_inv = ww
        .cholesky()
        .ok_or_else(|| Error::Collinearity("instruments are collinear".into()))?
        .inverse();
    // First-stage fitted regressors.
    let fitted = &instruments * (&ww_inv * (instruments.transpose() * &regressors));
    let gram = fitted.transpose() * &fitted;
    let gram_inv = gram
        .cholesky()
        .ok_or_else(|| {
            Error::Collinearity("treatment is not identified by the instruments".into())
        })?
        .inverse();
    let coef = &gram_inv * (fitted.transpose() * &data.y);
    let resid = &data.y - &regressors * &coef;
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let row = fitted.row(i);
        meat += row.transpose() * row * resid[i].powi(2);
    }
    let cov = &gram_inv * meat * &gram_inv;
    Ok(TwoSlsEstimate {
        slope: coef[1],
        std_error: cov[(1, 1)].max(0.0).sqrt(),
    })
}

fn concat_columns(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks[0].nrows();
    let cols: Vec<DVector<f64>> = blocks
        .iter()
        .flat_map(|b| b.column_iter().map(|c| c.into_owned()))
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// How many bootstrap draws each replication contributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum McMode {
    /// One draw per replication, pooled across replications.
    WarpSpeed,
    /// A full bootstrap of the given size inside every replication.
    FullBootstrap { replications: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub replications: usize,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub mode: McMode,
    /// Template for every fit; its penalty is replaced by the CV choice
    /// unless `fixed_lambda` is set.
    pub fit: FitConfig,
    pub grid: LambdaGrid,
    pub fixed_lambda: Option<f64>,
    pub weight_family: WeightFamily,
    pub execution: Execution,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            replications: 1000,
            levels: vec![0.05, 0.10],
            seed: 0,
            mode: McMode::WarpSpeed,
            fit: FitConfig::default(),
            grid: LambdaGrid::default(),
            fixed_lambda: None,
            weight_family: WeightFamily::Exponential,
            execution: Execution::Parallel,
        }
    }
}

impl MonteCarloConfig {
    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("at least one replication is required".into()));
        }
        if self.levels.is_empty() || self.levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return Err(Error::Config(
                "levels must be non-empty and lie in (0,1)".into(),
            ));
        }
        if let McMode::FullBootstrap { replications: 0 } = self.mode {
            return Err(Error::Config(
                "full bootstrap needs at least one draw".into(),
            ));
        }
        Ok(())
    }
}

/// Everything one replication produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub theta_hat: f64,
    pub lambda: f64,
    /// `|theta_b - theta_hat|` for each bootstrap draw of this replication.
    pub deviations: Vec<f64>,
    pub twosls: TwoSlsEstimate,
}

/// Draws, fits and bootstraps replication `r`.
pub fn run_replication(spec: &DgpSpec, mc: &MonteCarloConfig, r: usize) -> Result<Replication> {
    let stream = RandomStream::new(mc.seed, r as u64);
    let data = draw_sample(spec, stream);
    let lambda = match mc.fixed_lambda {
        Some(l) => l,
        None => {
            select_lambda(
                &data,
                &mc.fit,
                &mc.grid,
                stream.derive(FOLD_LABEL),
                Execution::Sequential,
            )?
            .lambda
        }
    };
    let fitted = fit(&data, &mc.fit.with_lambda(lambda))?;
    let theta_hat = fitted.ame()?;
    let boot = stream.derive(BOOTSTRAP_LABEL);
    let deviations = match mc.mode {
        McMode::WarpSpeed => {
            let xi = draw_weights(mc.weight_family, data.n(), boot);
            vec![(bootstrap_theta(fitted.problem(), lambda, &xi)? - theta_hat).abs()]
        }
        McMode::FullBootstrap { replications } => {
            let bcfg = BootstrapConfig {
                replications,
                weight_family: mc.weight_family,
                seed: boot.seed,
                execution: Execution::Sequential,
                ..BootstrapConfig::default()
            };
            let dist = BootstrapDistribution::from_fit(&fitted, &bcfg)?;
            dist.draws.iter().map(|t| (t - theta_hat).abs()).collect()
        }
    };
    Ok(Replication {
        theta_hat,
        lambda,
        deviations,
        twosls: two_stage_least_squares(&data)?,
    })
}

/// Rejection rates at one deviation `gamma` and one level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub gamma: f64,
    pub level: f64,
    pub rejection_rate: f64,
    /// Binomial standard error `sqrt(p (1 - p) / R)`.
    pub mc_stderr: f64,
    /// Rejection rate of the HC0 2SLS t-test of the same hypothesis.
    pub twosls_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub spec: DgpSpec,
    pub replications: usize,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub mode: McMode,
    /// Reference quantile per level (warp-speed mode only).
    pub pooled_quantiles: Vec<f64>,
    /// Rows ordered by gamma, then by level.
    pub rows: Vec<RateRow>,
    pub mean_theta_hat: f64,
    pub mean_lambda: f64,
    /// Fewer than [`MIN_REPLICATIONS`] replications.
    pub few_replications: bool,
    pub wall_time_secs: f64,
}

impl SimReport {
    /// Rows at `gamma = 0`.
    pub fn size_rows(&self) -> impl Iterator<Item = &RateRow> {
        self.rows.iter().filter(|r| r.gamma == 0.0)
    }

    pub fn rate(&self, gamma: f64, level: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.gamma == gamma && r.level == level)
            .map(|r| r.rejection_rate)
    }

    /// Coverage of the true AME by `[theta_hat +- q]` at `level`.
    pub fn coverage(&self, level: f64) -> Option<f64> {
        self.rate(0.0, level).map(|r| 1.0 - r)
    }
}

/// Runs all replications in parallel, in replication order.
pub fn run_replications(spec: &DgpSpec, mc: &MonteCarloConfig) -> Result<Vec<Replication>> {
    spec.validate()?;
    mc.validate()?;
    try_map_indexed(mc.execution, mc.replications, |r| {
        run_replication(spec, mc, r)
    })
}

/// Size and power from finished replications.
pub fn summarize(
    spec: &DgpSpec,
    mc: &MonteCarloConfig,
    reps: &[Replication],
    gammas: &[f64],
) -> Result<SimReport> {
    if reps.is_empty() {
        return Err(Error::Config("no replications to summarize".into()));
    }
    if gammas.is_empty() || gammas.iter().any(|g| !g.is_finite()) {
        return Err(Error::Config(
            "deviation grid must be non-empty and finite".into(),
        ));
    }
    let count = reps.len() as f64;
    let theta0 = spec.true_ame();
    let pooled: Vec<f64> = match mc.mode {
        McMode::WarpSpeed => reps.iter().map(|r| r.deviations[0]).collect(),
        McMode::FullBootstrap { .. } => Vec::new(),
    };
    let pooled_quantiles = if pooled.is_empty() {
        Vec::new()
    } else {
        mc.levels
            .iter()
            .map(|&l| empirical_quantile(&pooled, 1.0 - l))
            .collect::<Result<_>>()?
    };
    // Critical value per replication and level.
    let critical: Vec<Vec<f64>> = mc
        .levels
        .iter()
        .enumerate()
        .map(|(li, &level)| match mc.mode {
            McMode::WarpSpeed => Ok(vec![pooled_quantiles[li]; reps.len()]),
            McMode::FullBootstrap { .. } => reps
                .iter()
                .map(|r| empirical_quantile(&r.deviations, 1.0 - level))
                .collect::<Result<Vec<_>>>(),
        })
        .collect::<Result<_>>()?;
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut rows = Vec::with_capacity(gammas.len() * mc.levels.len());
    for &gamma in gammas {
        let h0 = theta0 + gamma;
        for (li, &level) in mc.levels.iter().enumerate() {
            let rejections = reps
                .iter()
                .zip(&critical[li])
                .filter(|(r, &q)| (r.theta_hat - h0).abs() > q)
                .count() as f64;
            let z_crit = std_normal.inverse_cdf(1.0 - 0.5 * level);
            let twosls = reps
                .iter()
                .filter(|r| (r.twosls.slope - h0).abs() > z_crit * r.twosls.std_error)
                .count() as f64;
            let p = rejections / count;
            rows.push(RateRow {
                gamma,
                level,
                rejection_rate: p,
                mc_stderr: (p * (1.0 - p) / count).sqrt(),
                twosls_rate: twosls / count,
            });
        }
    }
    Ok(SimReport {
        spec: *spec,
        replications: reps.len(),
        levels: mc.levels.clone(),
        seed: mc.seed,
        mode: mc.mode,
        pooled_quantiles,
        rows,
        mean_theta_hat: reps.iter().map(|r| r.theta_hat).sum::<f64>() / count,
        mean_lambda: reps.iter().map(|r| r.lambda).sum::<f64>() / count,
        few_replications: reps.len() < MIN_REPLICATIONS,
        wall_time_secs: 0.0,
    })
}

/// Rejection rates of `AME = theta_0` at each level.
pub fn run_size_experiment(spec: &DgpSpec, mc: &MonteCarloConfig) -> Result<SimReport> {
    run_power_curve(spec, &[0.0], mc)
}

/// Rejection rates of `AME = theta_0 + gamma` for each `gamma`.
pub fn run_power_curve(spec: &DgpSpec, gammas: &[f64], mc: &MonteCarloConfig) -> Result<SimReport> {
    let start = Instant::now();
    let reps = run_replications(spec, mc)?;
    let mut report = summarize(spec, mc, &reps, gammas)?;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// `count` equally spaced deviations on `[0, 1]`.
pub fn unit_gamma_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|i| i as f64 / (count - 1) as f64).collect(),
    }
}

/// Power-curve CSV: `gamma,level,rejection_rate,mc_stderr,twosls_rate`.
pub fn write_power_csv<W: Write>(report: &SimReport, mut out: W) -> io::Result<()> {
    writeln!(out, "gamma,level,rejection_rate,mc_stderr,twosls_rate")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.gamma, r.level, r.rejection_rate, r.mc_stderr, r.twosls_rate
        )?;
    }
    Ok(())
}

/// Size-table CSV: `design,h0,rho,n,level,rate,twosls_rate`.
pub fn write_size_csv<W: Write>(report: &SimReport, mut out: W) -> io::Result<()> {
    writeln!(out, "design,h0,rho,n,level,rate,twosls_rate")?;
    for r in report.size_rows() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            report.spec.design.label(),
            report.spec.h0.label(),
            report.spec.rho_eps_v,
            report.spec.n,
            r.level,
            r.rejection_rate,
            r.twosls_rate
        )?;
    }
    Ok(())
}
