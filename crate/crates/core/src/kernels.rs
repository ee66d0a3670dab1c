//! Reproducing kernels on a scalar treatment and their Gram matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points closer than this are reported as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

const QUADRATURE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    Gaussian,
    /// Kernel of the order-`kappa` Sobolev space on `[0, 1]`.
    Sobolev,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub gaussian_length_scale: f64,
    pub sobolev_order: u32,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::gaussian(1.0)
    }
}

impl KernelSpec {
    pub fn gaussian(length_scale: f64) -> Self {
        Self {
            family: KernelFamily::Gaussian,
            gaussian_length_scale: length_scale,
            sobolev_order: 1,
        }
    }

    pub fn sobolev(order: u32) -> Self {
        Self {
            family: KernelFamily::Sobolev,
            gaussian_length_scale: 1.0,
            sobolev_order: order,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            KernelFamily::Gaussian => {
                if !(self.gaussian_length_scale > 0.0 && self.gaussian_length_scale.is_finite()) {
                    return Err(Error::Config(format!(
                        "Gaussian length scale must be positive, got {}",
                        self.gaussian_length_scale
                    )));
                }
            }
            KernelFamily::Sobolev => {
                if self.sobolev_order < 1 {
                    return Err(Error::Config("Sobolev order must be at least 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Whether [`kernel_deriv`] is available.
    pub fn is_differentiable(&self) -> bool {
        match self.family {
            KernelFamily::Gaussian => true,
            KernelFamily::Sobolev => self.sobolev_order >= 2,
        }
    }

    fn check_domain(&self, z: f64, u: f64) -> Result<()> {
        if !z.is_finite() || !u.is_finite() {
            return Err(Error::InvalidInput(
                "kernel arguments must be finite".into(),
            ));
        }
        if self.family == KernelFamily::Sobolev
            && !((0.0..=1.0).contains(&z) && (0.0..=1.0).contains(&u))
        {
            return Err(Error::Domain(format!(
                "Sobolev kernel is defined on [0,1], got ({z}, {u})"
            )));
        }
        Ok(())
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

fn positive_part_pow(a: f64, k: u32) -> f64 {
    if a <= 0.0 {
        0.0
    } else {
        a.powi(k as i32)
    }
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

fn sobolev_value(order: u32, z: f64, u: f64) -> f64 {
    let m = z.min(u);
    match order {
        1 => 1.0 + m,
        2 => 1.0 + z * u + z * u * m - 0.5 * (z + u) * m * m + m * m * m / 3.0,
        k => {
            let poly: f64 = (0..k)
                .map(|j| {
                    let fj = factorial(j);
                    z.powi(j as i32) * u.powi(j as i32) / (fj * fj)
                })
                .sum();
            let fk = factorial(k - 1);
            let integrand = |t: f64| {
                positive_part_pow(z - t, k - 1) * positive_part_pow(u - t, k - 1) / (fk * fk)
            };
            poly + adaptive_simpson(&integrand, 0.0, m, QUADRATURE_TOL)
        }
    }
}

fn sobolev_deriv(order: u32, z: f64, u: f64) -> f64 {
    let m = z.min(u);
    match order {
        2 => u + u * m - 0.5 * m * m,
        k => {
            let poly: f64 = (1..k)
                .map(|j| z.powi(j as i32 - 1) / factorial(j - 1) * u.powi(j as i32) / factorial(j))
                .sum();
            let (fa, fb) = (factorial(k - 2), factorial(k - 1));
            let integrand = |t: f64| {
                positive_part_pow(z - t, k - 2) / fa * positive_part_pow(u - t, k - 1) / fb
            };
            poly + adaptive_simpson(&integrand, 0.0, m, QUADRATURE_TOL)
        }
    }
}

/// `K(z, u)`.
pub fn kernel_value(spec: &KernelSpec, z: f64, u: f64) -> Result<f64> {
    spec.check_domain(z, u)?;
    Ok(match spec.family {
        KernelFamily::Gaussian => {
            let l = spec.gaussian_length_scale;
            (-(z - u) * (z - u) / (2.0 * l * l)).exp()
        }
        KernelFamily::Sobolev => sobolev_value(spec.sobolev_order, z, u),
    })
}

/// `dK(z, u) / dz`.
pub fn kernel_deriv(spec: &KernelSpec, z: f64, u: f64) -> Result<f64> {
    if !spec.is_differentiable() {
        return Err(Error::UnsupportedDerivative(format!(
            "Sobolev kernel of order {}",
            spec.sobolev_order
        )));
    }
    spec.check_domain(z, u)?;
    Ok(match spec.family {
        KernelFamily::Gaussian => {
            let l = spec.gaussian_length_scale;
            let k = (-(z - u) * (z - u) / (2.0 * l * l)).exp();
            -(z - u) / (l * l) * k
        }
        KernelFamily::Sobolev => sobolev_deriv(spec.sobolev_order, z, u),
    })
}

/// Gram matrix `K[i][j] = K(Z_i, Z_j)` and derivative Gram matrix
/// `D[i][j] = dK(z, Z_j)/dz` at `z = Z_i`.
#[derive(Clone, Debug)]
pub struct GramPair {
    pub k: DMatrix<f64>,
    /// `None` when the kernel is not differentiable.
    pub d: Option<DMatrix<f64>>,
    /// Two sample points coincide within [`DUPLICATE_TOL`].
    pub duplicate_points: bool,
}

/// Builds the Gram pair for the sample `z`.
pub fn gram(spec: &KernelSpec, z: &[f64]) -> Result<GramPair> {
    spec.validate()?;
    let n = z.len();
    if n < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            available: n,
        });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "treatment values must be finite".into(),
        ));
    }
    let k = cross_gram(spec, z, z)?;
    let d = if spec.is_differentiable() {
        Some(cross_gram_deriv(spec, z, z)?)
    } else {
        None
    };
    Ok(GramPair {
        k,
        d,
        duplicate_points: has_duplicates(z),
    })
}

fn has_duplicates(z: &[f64]) -> bool {
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted
        .windows(2)
        .any(|w| (w[1] - w[0]).abs() <= DUPLICATE_TOL)
}

/// `M[i][j] = K(points_i, centers_j)`.
pub fn cross_gram(spec: &KernelSpec, points: &[f64], centers: &[f64]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(points.len(), centers.len());
    if spec.family == KernelFamily::Gaussian {
        // Hot path: avoid per-entry domain checks.
        let inv = 1.0 / (2.0 * spec.gaussian_length_scale * spec.gaussian_length_scale);
        if points.iter().chain(centers).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "kernel arguments must be finite".into(),
            ));
        }
        for (j, &c) in centers.iter().enumerate() {
            for (i, &p) in points.iter().enumerate() {
                m[(i, j)] = (-(p - c) * (p - c) * inv).exp();
            }
        }
        return Ok(m);
    }
    for (j, &c) in centers.iter().enumerate() {
        for (i, &p) in points.iter().enumerate() {
            m[(i, j)] = kernel_value(spec, p, c)?;
        }
    }
    Ok(m)
}

/// `M[i][j] = dK(z, centers_j)/dz` at `z = points_i`.
pub fn cross_gram_deriv(
    spec: &KernelSpec,
    points: &[f64],
    centers: &[f64],
) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(points.len(), centers.len());
    for (j, &c) in centers.iter().enumerate() {
        for (i, &p) in points.iter().enumerate() {
            m[(i, j)] = kernel_deriv(spec, p, c)?;
        }
    }
    Ok(m)
}
