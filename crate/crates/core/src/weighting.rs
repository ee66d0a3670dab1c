//! The weighting measure on the conditioning variables and the pairwise
//! weighting matrix built from its characteristic function.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows closer than this (in max-norm) are reported as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

/// Product measure with independent, zero-mean, unit-variance marginals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MuSpec {
    /// Laplace(0, 1/sqrt 2) marginals; characteristic function `1 / (1 + v^2 / 2)`.
    #[default]
    LaplaceProduct,
    /// Standard normal marginals; characteristic function `exp(-v^2 / 2)`.
    GaussianProduct,
}

impl MuSpec {
    #[inline]
    fn marginal(self, v: f64) -> f64 {
        match self {
            MuSpec::LaplaceProduct => 1.0 / (1.0 + 0.5 * v * v),
            MuSpec::GaussianProduct => (-0.5 * v * v).exp(),
        }
    }
}

/// Characteristic function of the product measure at `v`.
pub fn charfn_value(spec: MuSpec, v: &[f64]) -> Result<f64> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(
            "characteristic function argument must be finite".into(),
        ));
    }
    Ok(v.iter().map(|&x| spec.marginal(x)).product())
}

/// The `n x q` matrix whose rows enter the exogeneity condition.
#[derive(Clone, Debug)]
pub struct ConditioningMatrix {
    rows: DMatrix<f64>,
    duplicate_rows: bool,
}

impl ConditioningMatrix {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if rows.ncols() == 0 {
            return Err(Error::InvalidInput(
                "conditioning matrix needs at least one column".into(),
            ));
        }
        if rows.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(
                "conditioning variables must be finite".into(),
            ));
        }
        let duplicate_rows = has_duplicate_rows(&rows);
        Ok(Self {
            rows,
            duplicate_rows,
        })
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn nrows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn duplicate_rows(&self) -> bool {
        self.duplicate_rows
    }
}

fn has_duplicate_rows(rows: &DMatrix<f64>) -> bool {
    let n = rows.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rows[(a, 0)].total_cmp(&rows[(b, 0)]));
    // Sorted by the first coordinate; only rows within tolerance on it can coincide.
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if rows[(j, 0)] - rows[(i, 0)] > DUPLICATE_TOL {
                break;
            }
            let same =
                (0..rows.ncols()).all(|c| (rows[(i, c)] - rows[(j, c)]).abs() <= DUPLICATE_TOL);
            if same {
                return true;
            }
        }
    }
    false
}

/// `F[i][j] = charfn(V_i - V_j)`.
pub fn build_f(spec: MuSpec, v: &ConditioningMatrix) -> DMatrix<f64> {
    let rows = v.rows();
    let n = rows.nrows();
    let q = rows.ncols();
    let mut f = DMatrix::from_element(n, n, 1.0);
    for j in 0..n {
        for i in (j + 1)..n {
            let mut w = 1.0;
            for c in 0..q {
                w *= spec.marginal(rows[(i, c)] - rows[(j, c)]);
            }
            f[(i, j)] = w;
            f[(j, i)] = w;
        }
    }
    f
}

/// Bootstrap reweighting `F_b[i][j] = F[i][j] xi_i xi_j / mean(xi)^2`.
pub fn scale_f_bootstrap(f: &DMatrix<f64>, xi: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    if f.ncols() != n || xi.len() != n {
        return Err(Error::InvalidInput(format!(
            "weighting matrix is {}x{} but {} weights were given",
            n,
            f.ncols(),
            xi.len()
        )));
    }
    if let Some(bad) = xi.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "bootstrap weights must be positive, got {bad}"
        )));
    }
    let mean = xi.mean();
    let w = xi / mean;
    let mut out = f.clone();
    for j in 0..n {
        for i in 0..n {
            out[(i, j)] *= w[i] * w[j];
        }
    }
    Ok(out)
}
