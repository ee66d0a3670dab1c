//! Bayesian-bootstrap test of `AME = theta` and the confidence intervals
//! obtained by inverting it.
//!
//! Each bootstrap draw reweights observation `i` by `xi_i / mean(xi)` with
//! i.i.d. positive unit-mean, unit-variance weights, re-solves the penalized
//! program at the original penalty and recomputes the (weighted) AME. The
//! test rejects when `|theta_hat - theta_0|` exceeds the `1 - alpha` order
//! statistic of `|theta_b - theta_hat|`.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Exp1, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Dataset, Fit, FitConfig, Problem};
use crate::exec::{try_map_indexed, Execution};
use crate::numerics::{empirical_quantile, RandomStream};
use crate::weighting::scale_f_bootstrap;

/// Below this many draws the quantile is flagged as unreliable.
pub const MIN_RELIABLE_REPLICATIONS: usize = 20;

/// Distribution of the bootstrap weights. Every family has mean 1 and
/// variance 1 and strictly positive support.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightFamily {
    #[default]
    Exponential,
    /// `exp(N(-ln 2 / 2, ln 2))`.
    LogNormal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PValueMode {
    /// Quantiles of `|theta_b - theta_hat|`.
    #[default]
    Symmetric,
    /// Separate `alpha/2` and `1 - alpha/2` quantiles of `theta_b - theta_hat`.
    EqualTail,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub weight_family: WeightFamily,
    pub level: f64,
    pub seed: u64,
    pub mode: PValueMode,
    pub execution: Execution,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replications: 499,
            weight_family: WeightFamily::Exponential,
            level: 0.05,
            seed: 0,
            mode: PValueMode::Symmetric,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub theta_hat: f64,
    pub theta_h0: f64,
    pub level: f64,
    pub mode: PValueMode,
    pub draws: Vec<f64>,
    /// `1 - alpha` quantile of `|theta_b - theta_hat|`.
    pub q_hat: f64,
    /// Critical value on the `sqrt(n)` scale, `sqrt(n) * q_hat`.
    pub c_hat: f64,
    pub reject: bool,
    pub p_value: f64,
    pub ci: Interval,
    /// Fewer than [`MIN_RELIABLE_REPLICATIONS`] draws.
    pub few_replications: bool,
}

/// Bootstrap weights for `n` observations from one stream.
pub fn draw_weights(family: WeightFamily, n: usize, stream: RandomStream) -> DVector<f64> {
    let mut rng = stream.rng();
    draw_weights_with(family, n, &mut rng)
}

pub(crate) fn draw_weights_with<R: Rng>(
    family: WeightFamily,
    n: usize,
    rng: &mut R,
) -> DVector<f64> {
    match family {
        WeightFamily::Exponential => DVector::from_fn(n, |_, _| {
            // Exp1 can return exactly 0 with negligible probability; keep
            // the support strictly positive.
            let v: f64 = Exp1.sample(rng);
            v.max(f64::MIN_POSITIVE)
        }),
        WeightFamily::LogNormal => {
            let s2 = std::f64::consts::LN_2;
            let dist = LogNormal::new(-0.5 * s2, s2.sqrt()).expect("valid lognormal parameters");
            DVector::from_fn(n, |_, _| dist.sample(rng))
        }
    }
}

/// Bootstrap AME from a prepared problem at penalty `lambda`.
pub fn bootstrap_theta(problem: &Problem, lambda: f64, xi: &DVector<f64>) -> Result<f64> {
    if xi.len() != problem.n() {
        return Err(Error::InvalidInput(format!(
            "expected {} bootstrap weights, got {}",
            problem.n(),
            xi.len()
        )));
    }
    let fb = scale_f_bootstrap(problem.f(), xi)?;
    let system = problem.system(&fb)?;
    let solution = problem.solve(&system, lambda)?;
    let relative = xi / xi.mean();
    problem.weighted_ame(&solution.alpha, Some(&relative))
}

/// One bootstrap AME for weights `xi`, with the penalty fixed at `cfg.lambda`.
pub fn bootstrap_draw(data: &Dataset, cfg: &FitConfig, xi: &DVector<f64>) -> Result<f64> {
    let problem = Problem::new(data, cfg)?;
    bootstrap_theta(&problem, cfg.lambda, xi)
}

/// Point estimate plus the bootstrap draws around it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDistribution {
    pub theta_hat: f64,
    pub draws: Vec<f64>,
    pub n: usize,
    pub lambda: f64,
}

impl BootstrapDistribution {
    /// Runs `bcfg.replications` draws around an existing fit. Draw `b` uses
    /// stream `(bcfg.seed, b)`, so the result does not depend on scheduling.
    pub fn from_fit(fit: &Fit, bcfg: &BootstrapConfig) -> Result<Self> {
        if bcfg.replications == 0 {
            return Err(Error::Config(
                "at least one bootstrap replication is required".into(),
            ));
        }
        let theta_hat = fit.ame()?;
        let problem: &Arc<Problem> = fit.problem();
        let n = problem.n();
        let lambda = fit.lambda;
        let draws = try_map_indexed(bcfg.execution, bcfg.replications, |b| {
            let xi = draw_weights(
                bcfg.weight_family,
                n,
                RandomStream::new(bcfg.seed, b as u64),
            );
            bootstrap_theta(problem, lambda, &xi)
        })?;
        Ok(Self {
            theta_hat,
            draws,
            n,
            lambda,
        })
    }

    pub fn few_replications(&self) -> bool {
        self.draws.len() < MIN_RELIABLE_REPLICATIONS
    }

    /// `1 - alpha` quantile of `|theta_b - theta_hat|`.
    pub fn q_hat(&self, alpha: f64) -> Result<f64> {
        check_level(alpha)?;
        let dev: Vec<f64> = self
            .draws
            .iter()
            .map(|t| (t - self.theta_hat).abs())
            .collect();
        empirical_quantile(&dev, 1.0 - alpha)
    }

    pub fn confidence_interval(&self, alpha: f64, mode: PValueMode) -> Result<Interval> {
        match mode {
            PValueMode::Symmetric => {
                let q = self.q_hat(alpha)?;
                Ok(Interval {
                    lower: self.theta_hat - q,
                    upper: self.theta_hat + q,
                })
            }
            PValueMode::EqualTail => {
                check_level(alpha)?;
                let dev: Vec<f64> = self.draws.iter().map(|t| t - self.theta_hat).collect();
                let lo = empirical_quantile(&dev, 0.5 * alpha)?;
                let hi = empirical_quantile(&dev, 1.0 - 0.5 * alpha)?;
                Ok(Interval {
                    lower: self.theta_hat - hi,
                    upper: self.theta_hat - lo,
                })
            }
        }
    }

    pub fn p_value(&self, theta_h0: f64, mode: PValueMode) -> f64 {
        let b = self.draws.len() as f64;
        let stat = self.theta_hat - theta_h0;
        match mode {
            PValueMode::Symmetric => {
                let count = self
                    .draws
                    .iter()
                    .filter(|&&t| (t - self.theta_hat).abs() >= stat.abs())
                    .count();
                count as f64 / b
            }
            PValueMode::EqualTail => {
                let upper = self
                    .draws
                    .iter()
                    .filter(|&&t| t - self.theta_hat >= stat)
                    .count() as f64
                    / b;
                let lower = self
                    .draws
                    .iter()
                    .filter(|&&t| t - self.theta_hat <= stat)
                    .count() as f64
                    / b;
                (2.0 * upper.min(lower)).min(1.0)
            }
        }
    }

    /// Test of `AME = theta_h0` at level `alpha`.
    pub fn decide(&self, theta_h0: f64, alpha: f64, mode: PValueMode) -> Result<TestResult> {
        let q_hat = self.q_hat(alpha)?;
        let ci = self.confidence_interval(alpha, mode)?;
        let reject = match mode {
            PValueMode::Symmetric => (self.theta_hat - theta_h0).abs() > q_hat,
            PValueMode::EqualTail => !ci.contains(theta_h0),
        };
        Ok(TestResult {
            theta_hat: self.theta_hat,
            theta_h0,
            level: alpha,
            mode,
            draws: self.draws.clone(),
            q_hat,
            c_hat: (self.n as f64).sqrt() * q_hat,
            reject,
            p_value: self.p_value(theta_h0, mode),
            ci,
            few_replications: self.few_replications(),
        })
    }
}

fn check_level(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "level must lie in (0,1), got {alpha}"
        )));
    }
    Ok(())
}

/// Fits at `cfg.lambda` and runs the bootstrap.
pub fn bootstrap_distribution(
    data: &Dataset,
    cfg: &FitConfig,
    bcfg: &BootstrapConfig,
) -> Result<BootstrapDistribution> {
    let fit = crate::estimator::fit(data, cfg)?;
    BootstrapDistribution::from_fit(&fit, bcfg)
}

/// Bootstrap test of `AME = theta_h0` at level `bcfg.level`.
pub fn test(
    data: &Dataset,
    cfg: &FitConfig,
    bcfg: &BootstrapConfig,
    theta_h0: f64,
) -> Result<TestResult> {
    bootstrap_distribution(data, cfg, bcfg)?.decide(theta_h0, bcfg.level, bcfg.mode)
}

/// `[theta_hat - q_hat, theta_hat + q_hat]` from a finished test.
pub fn confidence_interval(result: &TestResult) -> Interval {
    Interval {
        lower: result.theta_hat - result.q_hat,
        upper: result.theta_hat + result.q_hat,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{draw_sample, DgpDesign, DgpSpec, TreatmentFunction};

    fn data(n: usize, seed: u64, design: DgpDesign) -> Dataset {
        let spec = DgpSpec {
            design,
            ..DgpSpec::new(TreatmentFunction::Quadratic, 0.5, n)
        };
        draw_sample(&spec, RandomStream::new(seed, 0))
    }

    fn cfg() -> FitConfig {
        FitConfig::default().with_lambda(1e-3)
    }

    #[test]
    fn weights_are_positive_reproducible_and_unit_moment() {
        let a = draw_weights(WeightFamily::Exponential, 50, RandomStream::new(3, 7));
        let b = draw_weights(WeightFamily::Exponential, 50, RandomStream::new(3, 7));
        assert_eq!(a, b);
        for family in [WeightFamily::Exponential, WeightFamily::LogNormal] {
            let xi = draw_weights(family, 100_000, RandomStream::new(1, 0));
            assert!(xi.iter().all(|&v| v > 0.0));
            let mean = xi.mean();
            let var = xi.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / xi.len() as f64;
            assert!((mean - 1.0).abs() <= 0.02, "{family:?} mean {mean}");
            assert!((var - 1.0).abs() <= 0.05, "{family:?} var {var}");
        }
    }

    #[test]
    fn unit_weights_reproduce_the_estimate() {
        for design in [DgpDesign::FullyNonparametric, DgpDesign::PartiallyLinear] {
            let d = data(60, 1, design);
            let f = crate::estimator::fit(&d, &cfg()).unwrap();
            let theta = f.ame().unwrap();
            let tb = bootstrap_draw(&d, &cfg(), &DVector::from_element(60, 1.0)).unwrap();
            assert!(
                (tb - theta).abs() <= 1e-10 * (1.0 + theta.abs()),
                "{tb} vs {theta}"
            );
        }
    }

    #[test]
    fn weight_rescaling_does_not_change_the_draw() {
        let d = data(40, 2, DgpDesign::PartiallyLinear);
        let xi = draw_weights(WeightFamily::Exponential, 40, RandomStream::new(9, 0));
        let a = bootstrap_draw(&d, &cfg(), &xi).unwrap();
        let b = bootstrap_draw(&d, &cfg(), &(&xi * 3.7)).unwrap();
        assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn nonpositive_weights_are_rejected() {
        let d = data(10, 3, DgpDesign::FullyNonparametric);
        let mut xi = DVector::from_element(10, 1.0);
        xi[2] = 0.0;
        assert!(matches!(
            bootstrap_draw(&d, &cfg(), &xi),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn draws_are_invariant_to_joint_relabeling() {
        let d = data(30, 4, DgpDesign::PartiallyLinear);
        let xi = draw_weights(WeightFamily::Exponential, 30, RandomStream::new(5, 0));
        let perm: Vec<usize> = (0..30).map(|i| (i * 7 + 3) % 30).collect();
        let dp = d.subset(&perm);
        let xip = DVector::from_iterator(30, perm.iter().map(|&i| xi[i]));
        let a = bootstrap_draw(&d, &cfg(), &xi).unwrap();
        let b = bootstrap_draw(&dp, &cfg(), &xip).unwrap();
        assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()), "{a} vs {b}");
    }

    fn distribution(draws: Vec<f64>, theta_hat: f64) -> BootstrapDistribution {
        BootstrapDistribution {
            theta_hat,
            draws,
            n: 100,
            lambda: 1e-3,
        }
    }

    #[test]
    fn null_at_the_estimate_is_never_rejected() {
        let dist = distribution((0..50).map(|i| (i as f64 - 25.0) * 0.01).collect(), 0.3);
        for alpha in [0.01, 0.05, 0.5, 0.99] {
            let r = dist.decide(0.3, alpha, PValueMode::Symmetric).unwrap();
            assert!(!r.reject);
            assert_eq!(r.p_value, 1.0);
        }
    }

    #[test]
    fn quantile_uses_the_order_statistic_and_scales_by_root_n() {
        let draws: Vec<f64> = (1..=499).map(|i| 2.0 + i as f64 * 1e-3).collect();
        let dist = distribution(draws, 2.0);
        let r = dist.decide(0.0, 0.05, PValueMode::Symmetric).unwrap();
        assert!((r.q_hat - 0.475).abs() < 1e-12);
        assert!((r.c_hat - 10.0 * r.q_hat).abs() < 1e-12);
        assert_eq!(confidence_interval(&r), r.ci);
        assert!(!r.few_replications);
    }

    #[test]
    fn degenerate_draws_give_a_point_interval() {
        let dist = distribution(vec![1.5; 30], 1.5);
        let ci = dist
            .confidence_interval(0.05, PValueMode::Symmetric)
            .unwrap();
        assert_eq!(
            ci,
            Interval {
                lower: 1.5,
                upper: 1.5
            }
        );
    }

    #[test]
    fn rejection_and_interval_are_dual() {
        let mut rng = RandomStream::new(8, 0).rng();
        let draws: Vec<f64> = (0..199)
            .map(|_| 0.2 + rng.random_range(-0.5..0.5))
            .collect();
        let dist = distribution(draws, 0.2);
        for mode in [PValueMode::Symmetric, PValueMode::EqualTail] {
            for alpha in [0.05, 0.1] {
                let ci = dist.confidence_interval(alpha, mode).unwrap();
                for k in -300..=300 {
                    let h0 = 0.2 + k as f64 * 0.002;
                    let r = dist.decide(h0, alpha, mode).unwrap();
                    assert_eq!(r.reject, !ci.contains(h0), "{mode:?} alpha {alpha} h0 {h0}");
                }
            }
        }
    }

    #[test]
    fn p_value_is_monotone_in_the_distance() {
        let mut rng = RandomStream::new(9, 0).rng();
        let draws: Vec<f64> = (0..99).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dist = distribution(draws, 0.0);
        let mut last = 1.0;
        for k in 0..200 {
            let p = dist.p_value(k as f64 * 0.01, PValueMode::Symmetric);
            assert!(p <= last);
            last = p;
        }
    }

    #[test]
    fn few_draws_are_flagged() {
        let d = data(30, 5, DgpDesign::FullyNonparametric);
        let bcfg = BootstrapConfig {
            replications: 10,
            seed: 1,
            ..BootstrapConfig::default()
        };
        let r = test(&d, &cfg(), &bcfg, 0.0).unwrap();
        assert!(r.few_replications);
        assert_eq!(r.draws.len(), 10);
    }

    #[test]
    fn test_is_deterministic_across_execution_modes() {
        let d = data(40, 6, DgpDesign::FullyNonparametric);
        let par = BootstrapConfig {
            replications: 30,
            seed: 42,
            ..BootstrapConfig::default()
        };
        let seq = BootstrapConfig {
            execution: Execution::Sequential,
            ..par
        };
        let a = test(&d, &cfg(), &par, 0.0).unwrap();
        let b = test(&d, &cfg(), &seq, 0.0).unwrap();
        assert_eq!(a, b);
    }
}
