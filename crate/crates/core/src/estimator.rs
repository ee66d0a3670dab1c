//! One-step penalized estimation of the treatment function, the linear
//! coefficients and the average marginal effect.
//!
//! With `K` the Gram matrix of the (mapped) treatment, `F` the weighting
//! matrix of the conditioning rows and `C = X'FX`, the coefficient vector
//! `alpha` is the minimum-norm solution of
//!
//! ```text
//! (K F K - K F X C^-1 X' F K + n^2 lambda K) alpha = K F (Y - X C^-1 X' F Y)
//! ```
//!
//! and `beta = C^-1 X' F (Y - K alpha)`. The fitted function is
//! `h(z) = sum_i alpha_i K(z, Z_i)` and the AME is the sample mean of `h'`.
//!
//! [`Problem`] holds everything that does not depend on `lambda` or on the
//! bootstrap weights, so cross-validation and the bootstrap reuse it.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, GramPair, KernelFamily, KernelSpec};
use crate::numerics::{self, Standardization, SymmetricSpectrum, DEFAULT_RANK_TOL};
use crate::weighting::{self, ConditioningMatrix, MuSpec};

/// Observed sample: outcome, scalar endogenous treatment, exogenous
/// covariates (possibly none) and instruments.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    /// `n x p`, `p >= 0`.
    pub x: DMatrix<f64>,
    /// `n x m`, `m >= 1`.
    pub w: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, z: DVector<f64>, x: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if z.len() != n || x.nrows() != n || w.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "row counts disagree: y {}, z {}, x {}, w {}",
                n,
                z.len(),
                x.nrows(),
                w.nrows()
            )));
        }
        if w.ncols() == 0 {
            return Err(Error::InvalidInput(
                "at least one instrument is required".into(),
            ));
        }
        let finite = y
            .iter()
            .chain(z.iter())
            .chain(x.iter())
            .chain(w.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput(
                "dataset contains non-finite values".into(),
            ));
        }
        Ok(Self { y, z, x, w })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
            z: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.z[i])),
            x: self.x.select_rows(idx.iter()),
            w: self.w.select_rows(idx.iter()),
        }
    }

    /// Copy with the outcome multiplied by `c`.
    pub fn with_scaled_outcome(&self, c: f64) -> Dataset {
        Dataset {
            y: &self.y * c,
            ..self.clone()
        }
    }
}

/// Which variables enter the weighting matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conditioning {
    /// Exogenous covariates and instruments.
    #[default]
    XandW,
    /// Instruments only; use when some columns of `X` are themselves endogenous.
    WOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub kernel: KernelSpec,
    pub mu: MuSpec,
    pub lambda: f64,
    pub standardize_inputs: bool,
    pub conditioning: Conditioning,
    pub include_intercept: bool,
    pub rank_tol: f64,
    /// Interval mapped onto `[0, 1]` for Sobolev kernels when standardizing.
    /// Defaults to the training range of the treatment.
    pub sobolev_domain: Option<(f64, f64)>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            mu: MuSpec::default(),
            lambda: 1e-3,
            standardize_inputs: true,
            conditioning: Conditioning::XandW,
            include_intercept: false,
            rank_tol: DEFAULT_RANK_TOL,
            sobolev_domain: None,
        }
    }
}

impl FitConfig {
    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    fn check_lambda(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "penalty must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// The `lambda`-independent part of the estimation problem.
#[derive(Clone, Debug)]
pub struct Problem {
    config: FitConfig,
    y: DVector<f64>,
    /// Linear regressors, including the intercept column when requested.
    x: DMatrix<f64>,
    z_train: Vec<f64>,
    z_map: Standardization,
    z_mapped: Vec<f64>,
    conditioning_maps: Vec<Standardization>,
    gram: GramPair,
    /// `U L^1/2` over the eigenpairs of `K` above the rank tolerance.
    range_basis: DMatrix<f64>,
    /// `U L^-1/2` over the same eigenpairs.
    range_back: DMatrix<f64>,
    f: DMatrix<f64>,
    duplicate_conditioning: bool,
}

/// Normal-equation pieces for one weighting matrix.
///
/// The equations `(K M K + n^2 lambda K) alpha = K M Y`, with
/// `M = F - F X C^-1 X' F`, are solved on the range of `K`: writing
/// `K = U L U'` over the retained eigenpairs and `alpha = U L^-1/2 delta`
/// turns them into `(G + n^2 lambda I) delta = c` with
/// `G = L^1/2 U' M U L^1/2` and `c = L^1/2 U' M Y`. `G` does not depend on
/// `lambda`, so its eigendecomposition is shared by every penalty.
#[derive(Clone, Debug)]
pub struct NormalSystem {
    m: DMatrix<f64>,
    /// `K M Y`.
    rhs: DVector<f64>,
    /// Eigendecomposition of `G`.
    reduced: SymmetricSpectrum,
    /// `V' c` for the eigenvectors `V` of `G`.
    reduced_rhs: DVector<f64>,
    /// `U L^-1/2 V`: maps reduced coordinates back to `alpha`.
    back: DMatrix<f64>,
    /// `F X`.
    fx: DMatrix<f64>,
    c_inv: DMatrix<f64>,
}

fn treatment_map(data: &Dataset, cfg: &FitConfig) -> Result<Standardization> {
    if !cfg.standardize_inputs {
        return Ok(Standardization::IDENTITY);
    }
    match cfg.kernel.family {
        KernelFamily::Gaussian => numerics::standardization_of(data.z.as_slice()),
        KernelFamily::Sobolev => {
            let (lo, hi) = cfg.sobolev_domain.unwrap_or_else(|| {
                let lo = data.z.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = data.z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            });
            if !(hi > lo) {
                return Err(Error::DegenerateScale("treatment has no spread".into()));
            }
            Ok(Standardization {
                center: lo,
                scale: hi - lo,
            })
        }
    }
}

fn conditioning_rows(data: &Dataset, cfg: &FitConfig) -> (DMatrix<f64>, Vec<Standardization>) {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    if cfg.conditioning == Conditioning::XandW {
        cols.extend(data.x.column_iter().map(|c| c.into_owned()));
    }
    cols.extend(data.w.column_iter().map(|c| c.into_owned()));
    let mut maps = Vec::with_capacity(cols.len());
    for col in cols.iter_mut() {
        let map = if cfg.standardize_inputs {
            // Constant columns carry no information about row differences;
            // center them and leave the scale alone.
            numerics::standardization_of(col.as_slice()).unwrap_or(Standardization {
                center: col[0],
                scale: 1.0,
            })
        } else {
            Standardization::IDENTITY
        };
        col.apply(|v| *v = map.apply(*v));
        maps.push(map);
    }
    (DMatrix::from_columns(&cols), maps)
}

/// `(U L^1/2, U L^-1/2)` over the eigenpairs of the Gram matrix whose
/// eigenvalue exceeds `rank_tol` times the largest one. Directions below the
/// cutoff are treated as the null space of `K`, on which the coefficients
/// are set to zero (the minimum-norm solution).
fn range_factors(k: &DMatrix<f64>, rank_tol: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let spectrum = SymmetricSpectrum::new(k)?;
    let kept: Vec<usize> = spectrum
        .retained(rank_tol)
        .into_iter()
        .filter(|&j| spectrum.values[j] > 0.0)
        .collect();
    let u = spectrum.vectors.select_columns(kept.iter());
    let mut basis = u.clone();
    let mut back = u;
    for (c, &j) in kept.iter().enumerate() {
        let root = spectrum.values[j].sqrt();
        basis.column_mut(c).scale_mut(root);
        back.column_mut(c).unscale_mut(root);
    }
    Ok((basis, back))
}

fn check_full_column_rank(x: &DMatrix<f64>) -> Result<()> {
    let p = x.ncols();
    if p == 0 {
        return Ok(());
    }
    let xtx = x.transpose() * x;
    let spectrum = SymmetricSpectrum::new(&xtx)?;
    let rank = spectrum.retained(1e-12).len();
    if rank < p {
        return Err(Error::Collinearity(format!(
            "linear regressors have rank {rank} < {p} columns"
        )));
    }
    Ok(())
}

impl Problem {
    pub fn new(data: &Dataset, cfg: &FitConfig) -> Result<Self> {
        cfg.kernel.validate()?;
        if !(cfg.rank_tol > 0.0) {
            return Err(Error::Config(format!(
                "rank tolerance must be positive, got {}",
                cfg.rank_tol
            )));
        }
        let n = data.n();
        if n < 3 {
            return Err(Error::InsufficientData {
                needed: 3,
                available: n,
            });
        }
        let x = if cfg.include_intercept {
            data.x.clone().insert_column(data.p(), 1.0)
        } else {
            data.x.clone()
        };
        if n < x.ncols() + 2 {
            return Err(Error::InsufficientData {
                needed: x.ncols() + 2,
                available: n,
            });
        }
        check_full_column_rank(&x)?;

        let z_map = treatment_map(data, cfg)?;
        let z_train: Vec<f64> = data.z.iter().copied().collect();
        let z_mapped: Vec<f64> = z_train.iter().map(|&v| z_map.apply(v)).collect();
        let gram = kernels::gram(&cfg.kernel, &z_mapped)?;
        let (range_basis, range_back) = range_factors(&gram.k, cfg.rank_tol)?;

        let (rows, conditioning_maps) = conditioning_rows(data, cfg);
        let v = ConditioningMatrix::new(rows)?;
        let f = weighting::build_f(cfg.mu, &v);

        Ok(Self {
            config: *cfg,
            y: data.y.clone(),
            x,
            z_train,
            z_map,
            z_mapped,
            conditioning_maps,
            gram,
            range_basis,
            range_back,
            f,
            duplicate_conditioning: v.duplicate_rows(),
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn gram(&self) -> &GramPair {
        &self.gram
    }

    /// Weighting matrix of the original sample.
    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    /// Linear design, intercept column last when present.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn z_map(&self) -> Standardization {
        self.z_map
    }

    pub fn z_mapped(&self) -> &[f64] {
        &self.z_mapped
    }

    pub fn conditioning_maps(&self) -> &[Standardization] {
        &self.conditioning_maps
    }

    pub fn duplicate_conditioning(&self) -> bool {
        self.duplicate_conditioning
    }

    /// Assembles the normal equations for weighting matrix `f` (the sample
    /// matrix or a bootstrap reweighting of it).
    pub fn system(&self, f: &DMatrix<f64>) -> Result<NormalSystem> {
        let k = &self.gram.k;
        let p = self.x.ncols();
        let fx = f * &self.x;
        let (m, c_inv) = if p == 0 {
            (f.clone(), DMatrix::zeros(0, 0))
        } else {
            let c = self.x.transpose() * &fx;
            let c = (&c + c.transpose()) * 0.5;
            let c_inv = c
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Collinearity("X'FX is not positive definite".into()))?
                .inverse();
            let proj = &fx * &c_inv * fx.transpose();
            (f - proj, c_inv)
        };
        let basis = &self.range_basis;
        let mb = &m * basis;
        let g = basis.transpose() * &mb;
        let g = (&g + g.transpose()) * 0.5;
        let reduced = SymmetricSpectrum::new(&g)?;
        let c = mb.transpose() * &self.y;
        let reduced_rhs = reduced.vectors.transpose() * c;
        let back = &self.range_back * &reduced.vectors;
        let rhs = k * (&m * &self.y);
        Ok(NormalSystem {
            m,
            rhs,
            reduced,
            reduced_rhs,
            back,
            fx,
            c_inv,
        })
    }

    /// Solves the normal equations at penalty `lambda`.
    pub fn solve(&self, system: &NormalSystem, lambda: f64) -> Result<Solution> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "penalty must be positive, got {lambda}"
            )));
        }
        let n = self.n() as f64;
        let shift = n * n * lambda;
        let coef = DVector::from_fn(system.reduced_rhs.len(), |j, _| {
            system.reduced_rhs[j] / (system.reduced.values[j] + shift)
        });
        let alpha = &system.back * coef;
        let k = &self.gram.k;
        let ka = k * &alpha;
        let lhs = k * (&system.m * &ka) + &ka * shift;
        let foc_residual = (lhs - &system.rhs).norm();
        let beta = if self.x.ncols() == 0 {
            DVector::zeros(0)
        } else {
            let resid = &self.y - &self.gram.k * &alpha;
            &system.c_inv * (system.fx.transpose() * resid)
        };
        if !(alpha.iter().chain(beta.iter()).all(|v| v.is_finite()) && foc_residual.is_finite()) {
            return Err(Error::Numeric(format!(
                "the solution at penalty {lambda:e} is not finite"
            )));
        }
        Ok(Solution {
            alpha,
            beta,
            foc_residual,
            rhs_norm: system.rhs.norm(),
            effective_rank: self.range_basis.ncols(),
            rank_deficient: self.range_basis.ncols() < self.n(),
        })
    }

    /// `(1/n) sum_i w_i h'(Z_i)` in original treatment units.
    pub fn weighted_ame(
        &self,
        alpha: &DVector<f64>,
        weights: Option<&DVector<f64>>,
    ) -> Result<f64> {
        let d = self.gram.d.as_ref().ok_or_else(|| {
            Error::UnsupportedDerivative(format!(
                "Sobolev kernel of order {}",
                self.config.kernel.sobolev_order
            ))
        })?;
        let deriv = d * alpha;
        let n = self.n() as f64;
        let total = match weights {
            None => deriv.sum(),
            Some(w) => deriv.dot(w),
        };
        Ok(total / n / self.z_map.scale)
    }

    /// Objective value `(1/n^2) r'Fr + lambda alpha'K alpha` with
    /// `r = Y - X beta - K alpha`.
    pub fn objective(&self, lambda: f64, alpha: &DVector<f64>, beta: &DVector<f64>) -> Result<f64> {
        if alpha.len() != self.n() || beta.len() != self.x.ncols() {
            return Err(Error::InvalidInput(format!(
                "expected alpha of length {} and beta of length {}, got {} and {}",
                self.n(),
                self.x.ncols(),
                alpha.len(),
                beta.len()
            )));
        }
        let ka = &self.gram.k * alpha;
        let r = &self.y - &self.x * beta - &ka;
        let n = self.n() as f64;
        Ok(r.dot(&(&self.f * &r)) / (n * n) + lambda * alpha.dot(&ka))
    }
}

/// Raw solution of the normal equations.
#[derive(Clone, Debug)]
pub struct Solution {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub foc_residual: f64,
    pub rhs_norm: f64,
    pub effective_rank: usize,
    pub rank_deficient: bool,
}

/// A solved estimation problem.
#[derive(Clone, Debug)]
pub struct Fit {
    problem: Arc<Problem>,
    pub alpha: DVector<f64>,
    /// Coefficients on `X`, followed by the intercept when one was added.
    pub beta: DVector<f64>,
    pub lambda: f64,
    /// Norm of the normal-equation residual at `alpha`.
    pub foc_residual: f64,
    pub rhs_norm: f64,
    pub effective_rank: usize,
    pub rank_deficient: bool,
}

impl Fit {
    /// Solves `problem` at penalty `lambda` against its own weighting matrix.
    pub fn from_problem(problem: Arc<Problem>, lambda: f64) -> Result<Fit> {
        let system = problem.system(&problem.f)?;
        Self::from_system(problem, &system, lambda)
    }

    pub fn from_system(problem: Arc<Problem>, system: &NormalSystem, lambda: f64) -> Result<Fit> {
        let s = problem.solve(system, lambda)?;
        Ok(Fit {
            problem,
            alpha: s.alpha,
            beta: s.beta,
            lambda,
            foc_residual: s.foc_residual,
            rhs_norm: s.rhs_norm,
            effective_rank: s.effective_rank,
            rank_deficient: s.rank_deficient,
        })
    }

    pub fn problem(&self) -> &Arc<Problem> {
        &self.problem
    }

    pub fn gram(&self) -> &GramPair {
        &self.problem.gram
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.problem.f
    }

    pub fn z_train(&self) -> &[f64] {
        &self.problem.z_train
    }

    pub fn z_map(&self) -> Standardization {
        self.problem.z_map
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.problem.config.kernel
    }

    pub fn has_intercept(&self) -> bool {
        self.problem.config.include_intercept
    }

    pub fn duplicate_treatment(&self) -> bool {
        self.problem.gram.duplicate_points
    }

    pub fn duplicate_conditioning(&self) -> bool {
        self.problem.duplicate_conditioning
    }

    fn mapped(&self, z_points: &[f64]) -> Result<Vec<f64>> {
        if z_points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "evaluation points must be finite".into(),
            ));
        }
        Ok(z_points
            .iter()
            .map(|&v| self.problem.z_map.apply(v))
            .collect())
    }

    /// `h(z)` at each point, in original treatment units.
    pub fn predict_h(&self, z_points: &[f64]) -> Result<Vec<f64>> {
        let pts = self.mapped(z_points)?;
        let cross = kernels::cross_gram(self.kernel(), &pts, &self.problem.z_mapped)?;
        Ok((cross * &self.alpha).iter().copied().collect())
    }

    /// `h'(z)` at each point, in original treatment units.
    pub fn predict_h_deriv(&self, z_points: &[f64]) -> Result<Vec<f64>> {
        if !self.kernel().is_differentiable() {
            return Err(Error::UnsupportedDerivative(format!(
                "Sobolev kernel of order {}",
                self.kernel().sobolev_order
            )));
        }
        let pts = self.mapped(z_points)?;
        let cross = kernels::cross_gram_deriv(self.kernel(), &pts, &self.problem.z_mapped)?;
        let scale = self.problem.z_map.scale;
        Ok((cross * &self.alpha).iter().map(|v| v / scale).collect())
    }

    /// Average marginal effect `(1/n) 1' D alpha`, in original units.
    pub fn ame(&self) -> Result<f64> {
        self.problem.weighted_ame(&self.alpha, None)
    }

    /// `h(Z_i)` at the training points.
    pub fn fitted_h(&self) -> DVector<f64> {
        &self.problem.gram.k * &self.alpha
    }

    /// Objective plus penalty at the fitted coefficients.
    pub fn objective(&self) -> f64 {
        self.problem
            .objective(self.lambda, &self.alpha, &self.beta)
            .expect("fit coefficients have matching dimensions")
    }
}

/// Solves the penalized program for `data` under `cfg`.
pub fn fit(data: &Dataset, cfg: &FitConfig) -> Result<Fit> {
    cfg.check_lambda()?;
    let problem = Arc::new(Problem::new(data, cfg)?);
    Fit::from_problem(problem, cfg.lambda)
}

pub fn predict_h(fit: &Fit, z_points: &[f64]) -> Result<Vec<f64>> {
    fit.predict_h(z_points)
}

pub fn predict_h_deriv(fit: &Fit, z_points: &[f64]) -> Result<Vec<f64>> {
    fit.predict_h_deriv(z_points)
}

pub fn ame(fit: &Fit) -> Result<f64> {
    fit.ame()
}

/// Penalized objective at arbitrary coefficients, with the same input
/// preprocessing as [`fit`]. `beta` includes the intercept when configured.
pub fn objective_value(
    data: &Dataset,
    cfg: &FitConfig,
    alpha: &DVector<f64>,
    beta: &DVector<f64>,
) -> Result<f64> {
    cfg.check_lambda()?;
    Problem::new(data, cfg)?.objective(cfg.lambda, alpha, beta)
}
