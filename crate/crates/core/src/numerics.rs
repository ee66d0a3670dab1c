//! Shared numeric primitives: symmetric minimum-norm solves, order-statistic
//! quantiles, column standardization and reproducible random streams.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative spectral cutoff used by the estimator's minimum-norm solves.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Maximum tolerated asymmetry, relative to the largest absolute entry.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Outcome of a minimum-norm solve.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: DVector<f64>,
    pub rank_deficient: bool,
    /// Euclidean norm of `A x - b`, evaluated with the matrix as supplied.
    pub residual_norm: f64,
    pub effective_rank: usize,
}

/// Eigendecomposition of a symmetric matrix, eigenvalues in nondecreasing order.
#[derive(Clone, Debug)]
pub struct SymmetricSpectrum {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymmetricSpectrum {
    /// Decomposes `a`, which must be square. Only the lower triangle is read.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "expected a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        if n == 0 {
            return Ok(Self {
                values: DVector::zeros(0),
                vectors: DMatrix::zeros(0, 0),
            });
        }
        let m = Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
        let evd = m
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numeric(format!("eigendecomposition failed: {e:?}")))?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let values = DVector::from_fn(n, |i, _| s[i]);
        let vectors = DMatrix::from_fn(n, n, |i, j| u[(i, j)]);
        Ok(Self { values, vectors })
    }

    /// Largest absolute eigenvalue (the spectral norm for symmetric input).
    pub fn spectral_radius(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Indices of eigenvalues whose magnitude exceeds `rank_tol` times the
    /// spectral radius.
    pub fn retained(&self, rank_tol: f64) -> Vec<usize> {
        let cutoff = rank_tol * self.spectral_radius();
        (0..self.values.len())
            .filter(|&i| self.values[i].abs() > cutoff && self.values[i] != 0.0)
            .collect()
    }

    /// Orthonormal basis (as columns) of the numerical null space.
    pub fn null_space_basis(&self, rank_tol: f64) -> DMatrix<f64> {
        let kept = self.retained(rank_tol);
        let dropped: Vec<usize> = (0..self.values.len())
            .filter(|i| !kept.contains(i))
            .collect();
        self.vectors.select_columns(dropped.iter())
    }

    /// Pseudo-inverse applied to `b`, discarding components below the cutoff.
    pub fn pseudo_solve(&self, b: &DVector<f64>, rank_tol: f64) -> (DVector<f64>, usize) {
        let kept = self.retained(rank_tol);
        let mut x = DVector::zeros(b.len());
        for &k in &kept {
            let u = self.vectors.column(k);
            let coef = u.dot(b) / self.values[k];
            x.axpy(coef, &u, 1.0);
        }
        (x, kept.len())
    }
}

fn check_finite_matrix(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} contains non-finite entries"
        )))
    }
}

/// Largest absolute asymmetry `|a_ij - a_ji|`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Minimum-Euclidean-norm minimizer of `||A x - b||` for symmetric PSD `A`.
///
/// The rank is decided spectrally: eigen-components whose magnitude falls
/// below `rank_tol` times the largest one are treated as exact zeros, so the
/// returned vector lies in the span of the retained eigenvectors.
pub fn solve_min_norm(a: &DMatrix<f64>, b: &DVector<f64>, rank_tol: f64) -> Result<SolveReport> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: matrix {}x{}, right-hand side {}",
            n,
            a.ncols(),
            b.len()
        )));
    }
    if !(rank_tol > 0.0) || !rank_tol.is_finite() {
        return Err(Error::InvalidInput(format!(
            "rank tolerance must be positive, got {rank_tol}"
        )));
    }
    check_finite_matrix(a, "system matrix")?;
    if !b.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput(
            "right-hand side contains non-finite entries".into(),
        ));
    }
    let scale = a.amax();
    let skew = asymmetry(a);
    if skew > SYMMETRY_TOL * scale {
        return Err(Error::InvalidInput(format!(
            "matrix is not symmetric: max asymmetry {skew:e} vs scale {scale:e}"
        )));
    }
    let sym = (a + a.transpose()) * 0.5;
    let spectrum = SymmetricSpectrum::new(&sym)?;
    let (solution, effective_rank) = spectrum.pseudo_solve(b, rank_tol);
    let residual_norm = (a * &solution - b).norm();
    Ok(SolveReport {
        solution,
        rank_deficient: effective_rank < n,
        residual_norm,
        effective_rank,
    })
}

/// `inf { c : #{draws <= c} / B >= level }`, i.e. the `ceil(level * B)`-th
/// order statistic. No interpolation.
pub fn empirical_quantile(draws: &[f64], level: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::InvalidInput("quantile of an empty sample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "quantile level must lie in (0,1), got {level}"
        )));
    }
    if draws.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput(
            "quantile sample contains non-finite draws".into(),
        ));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let k = order_statistic_index(sorted.len(), level);
    Ok(sorted[k - 1])
}

/// One-based rank `k` of the smallest order statistic with `k / B >= level`.
pub fn order_statistic_index(count: usize, level: f64) -> usize {
    let b = count as f64;
    let mut k = ((level * b).ceil() as usize).clamp(1, count);
    while k > 1 && ((k - 1) as f64) / b >= level {
        k -= 1;
    }
    while k < count && (k as f64) / b < level {
        k += 1;
    }
    k
}

/// Affine map `v -> (v - center) / scale` and its inverse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub center: f64,
    pub scale: f64,
}

impl Standardization {
    pub const IDENTITY: Standardization = Standardization {
        center: 0.0,
        scale: 1.0,
    };

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.center) / self.scale
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.scale + self.center
    }
}

/// Centers by the mean and scales by the population (1/n) standard deviation.
pub fn standardize(column: &[f64]) -> Result<(Vec<f64>, Standardization)> {
    let t = standardization_of(column)?;
    Ok((column.iter().map(|&v| t.apply(v)).collect(), t))
}

/// The transform [`standardize`] would apply, without applying it.
pub fn standardization_of(column: &[f64]) -> Result<Standardization> {
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "column contains non-finite values".into(),
        ));
    }
    let n = column.len() as f64;
    if column.len() < 2 {
        return Err(Error::DegenerateScale(
            "need at least two values to standardize".into(),
        ));
    }
    let mean = column.iter().sum::<f64>() / n;
    let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > f64::EPSILON * mean.abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateScale("column is constant".into()));
    }
    Ok(Standardization {
        center: mean,
        scale: sd,
    })
}

/// A reproducible random stream keyed by `(seed, stream_id)`.
///
/// Streams with the same key replay bit-identical sequences; different
/// `stream_id`s select non-overlapping ChaCha streams under the same key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A child key for nested work (e.g. the folds or bootstrap draws that
    /// belong to one Monte Carlo replication). Children of distinct parents
    /// or distinct labels get unrelated seeds.
    pub fn derive(&self, label: u64) -> RandomStream {
        let seed = splitmix64(self.seed ^ splitmix64(self.stream_id ^ splitmix64(label)));
        RandomStream { seed, stream_id: 0 }
    }

    /// Sibling stream under the same seed.
    pub fn with_stream(&self, stream_id: u64) -> RandomStream {
        RandomStream {
            seed: self.seed,
            stream_id,
        }
    }
}
