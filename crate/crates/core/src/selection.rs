//! Two-fold cross-validated choice of the penalty.
//!
//! The sample is split once into `S1` (size `ceil(n/2)`) and `S2`. Each fold
//! is fitted on the other fold, the out-of-fold residuals
//! `Y_i - X_i'beta - h(Z_i)` are stacked in original index order into `r`,
//! and the criterion is `(1/n^2) r' F r` with `F` the full-sample weighting
//! matrix. This equals the integral over `mu` of the squared modulus of
//! `(1/n) sum_i r_i exp(i t'V_i)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Dataset, FitConfig, NormalSystem, Problem};
use crate::exec::{map_indexed, Execution};
use crate::kernels::{self, KernelFamily};
use crate::numerics::RandomStream;

pub const DEFAULT_GRID_MIN: f64 = 1e-8;
pub const DEFAULT_GRID_MAX: f64 = 1e1;
pub const DEFAULT_GRID_COUNT: usize = 30;

/// Candidate penalties with their criterion values once evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub values: Vec<f64>,
    /// One entry per value after selection; `NaN` where the fold fits failed.
    pub criteria: Vec<f64>,
    pub argmin: Option<usize>,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self::geometric(DEFAULT_GRID_MIN, DEFAULT_GRID_MAX, DEFAULT_GRID_COUNT)
            .expect("default grid is valid")
    }
}

impl LambdaGrid {
    /// `count` log-equally spaced points from `min` to `max` inclusive.
    pub fn geometric(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min > 0.0 && max.is_finite() && max >= min) || count == 0 {
            return Err(Error::Config(format!(
                "grid needs 0 < min <= max and count >= 1, got ({min}, {max}, {count})"
            )));
        }
        if count > 1 && max == min {
            return Err(Error::Config(
                "a grid with several points needs min < max".into(),
            ));
        }
        let values = if count == 1 {
            vec![min]
        } else {
            let (lo, hi) = (min.ln(), max.ln());
            (0..count)
                .map(|i| {
                    if i == count - 1 {
                        max
                    } else {
                        (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        };
        Self::from_values(values)
    }

    /// Explicit grid; values must be positive, finite and strictly increasing.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("penalty grid is empty".into()));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(
                "penalty grid values must be positive and finite".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "penalty grid must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            values,
            criteria: Vec::new(),
            argmin: None,
        })
    }

    pub fn selected(&self) -> Option<f64> {
        self.argmin.map(|i| self.values[i])
    }
}

/// Disjoint, exhaustive split of `0..n` into two folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    /// Sorted indices of the first fold, `ceil(n/2)` of them.
    pub s1: Vec<usize>,
    /// Sorted indices of the second fold.
    pub s2: Vec<usize>,
    pub stream: RandomStream,
}

impl FoldSplit {
    pub fn n(&self) -> usize {
        self.s1.len() + self.s2.len()
    }

    fn folds(&self) -> [&[usize]; 2] {
        [&self.s1, &self.s2]
    }
}

/// Uniformly random halving of `0..n` from a seeded permutation.
pub fn make_folds(n: usize, stream: RandomStream) -> Result<FoldSplit> {
    if n < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            available: n,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream.rng());
    let cut = n.div_ceil(2);
    let mut s1 = perm[..cut].to_vec();
    let mut s2 = perm[cut..].to_vec();
    s1.sort_unstable();
    s2.sort_unstable();
    Ok(FoldSplit { s1, s2, stream })
}

/// One direction of the cross-fit: trained on the complement of `eval`.
struct FoldFit {
    eval: Vec<usize>,
    problem: Arc<Problem>,
    system: NormalSystem,
    /// Kernel sections of the training points at the held-out treatments.
    cross: DMatrix<f64>,
    /// Held-out linear design, intercept column last when present.
    x_eval: DMatrix<f64>,
}

/// Everything the criterion needs that does not depend on the penalty.
struct CrossFit {
    y: DVector<f64>,
    f_full: DMatrix<f64>,
    folds: [FoldFit; 2],
}

impl CrossFit {
    fn new(data: &Dataset, cfg: &FitConfig, split: &FoldSplit) -> Result<Self> {
        let n = data.n();
        if split.n() != n {
            return Err(Error::InvalidInput(format!(
                "fold split covers {} observations but the sample has {n}",
                split.n()
            )));
        }
        let mut cfg = *cfg;
        if cfg.kernel.family == KernelFamily::Sobolev
            && cfg.standardize_inputs
            && cfg.sobolev_domain.is_none()
        {
            // Map every fold with the full-sample range so held-out
            // treatments stay inside the kernel's domain.
            let lo = data.z.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = data.z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            cfg.sobolev_domain = Some((lo, hi));
        }
        let full = Problem::new(data, &cfg)?;
        let [a, b] = split.folds();
        let folds = [Self::fold(data, &cfg, b, a)?, Self::fold(data, &cfg, a, b)?];
        Ok(Self {
            y: data.y.clone(),
            f_full: full.f().clone(),
            folds,
        })
    }

    fn fold(data: &Dataset, cfg: &FitConfig, train: &[usize], eval: &[usize]) -> Result<FoldFit> {
        let problem = Arc::new(Problem::new(&data.subset(train), cfg)?);
        let system = problem.system(problem.f())?;
        let map = problem.z_map();
        let pts: Vec<f64> = eval.iter().map(|&i| map.apply(data.z[i])).collect();
        let cross = kernels::cross_gram(&cfg.kernel, &pts, problem.z_mapped())?;
        let held_out = data.subset(eval);
        let x_eval = if cfg.include_intercept {
            held_out.x.insert_column(data.p(), 1.0)
        } else {
            held_out.x
        };
        Ok(FoldFit {
            eval: eval.to_vec(),
            problem,
            system,
            cross,
            x_eval,
        })
    }

    /// Pooled out-of-fold residuals, in original index order.
    fn residuals(&self, lambda: f64) -> Result<DVector<f64>> {
        let mut r = DVector::zeros(self.y.len());
        for fold in &self.folds {
            let s = fold.problem.solve(&fold.system, lambda)?;
            let fitted = &fold.cross * &s.alpha + &fold.x_eval * &s.beta;
            for (k, &i) in fold.eval.iter().enumerate() {
                r[i] = self.y[i] - fitted[k];
            }
        }
        Ok(r)
    }

    fn criterion(&self, lambda: f64) -> Result<f64> {
        let r = self.residuals(lambda)?;
        let n = r.len() as f64;
        let value = r.dot(&(&self.f_full * &r)) / (n * n);
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "cross-validation criterion is {value} at penalty {lambda:e}"
            )));
        }
        // F is positive semidefinite; clamp round-off below zero.
        Ok(value.max(0.0))
    }
}

/// Out-of-fold residuals at `cfg.lambda`, in original index order.
pub fn cv_residuals(data: &Dataset, cfg: &FitConfig, split: &FoldSplit) -> Result<DVector<f64>> {
    CrossFit::new(data, cfg, split)?.residuals(cfg.lambda)
}

/// Cross-validation criterion at `cfg.lambda`.
pub fn cv_criterion(data: &Dataset, cfg: &FitConfig, split: &FoldSplit) -> Result<f64> {
    CrossFit::new(data, cfg, split)?.criterion(cfg.lambda)
}

/// Outcome of the grid search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub lambda: f64,
    pub grid: LambdaGrid,
    pub split: FoldSplit,
}

/// Minimizes the criterion over `grid` on one shared split drawn from
/// `stream`. Exact ties go to the smaller penalty.
pub fn select_lambda(
    data: &Dataset,
    cfg: &FitConfig,
    grid: &LambdaGrid,
    stream: RandomStream,
    exec: Execution,
) -> Result<Selection> {
    let split = make_folds(data.n(), stream)?;
    select_lambda_on(data, cfg, grid, split, exec)
}

/// As [`select_lambda`], with a caller-supplied split.
pub fn select_lambda_on(
    data: &Dataset,
    cfg: &FitConfig,
    grid: &LambdaGrid,
    split: FoldSplit,
    exec: Execution,
) -> Result<Selection> {
    if grid.values.is_empty() {
        return Err(Error::Config("penalty grid is empty".into()));
    }
    let cross = CrossFit::new(data, cfg, &split)?;
    let criteria: Vec<f64> = map_indexed(exec, grid.values.len(), |i| {
        cross.criterion(grid.values[i]).unwrap_or(f64::NAN)
    });
    let mut argmin: Option<usize> = None;
    for (i, &c) in criteria.iter().enumerate() {
        if c.is_finite() && argmin.is_none_or(|j| c < criteria[j]) {
            argmin = Some(i);
        }
    }
    let argmin = argmin
        .ok_or_else(|| Error::Selection("no penalty in the grid gave a finite criterion".into()))?;
    Ok(Selection {
        lambda: grid.values[argmin],
        grid: LambdaGrid {
            values: grid.values.clone(),
            criteria,
            argmin: Some(argmin),
        },
        split,
    })
}
