//! Random problem instances shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rkhs_iv::{Dataset, RandomStream};

/// Endogenous sample with `p` covariates and `m` instruments: `Z` loads on
/// the instruments and on the error, `Y = sin(2Z) + sum(X) + eps`.
pub fn instance(n: usize, p: usize, m: usize, seed: u64) -> Dataset {
    let mut rng = RandomStream::new(seed, 17).rng();
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let w = DMatrix::from_fn(n, m, |_, _| normal());
    let x = DMatrix::from_fn(n, p, |_, _| normal());
    let mut z = DVector::zeros(n);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let v = normal();
        let eps = 0.5 * v + normal();
        z[i] = w.row(i).sum() + v;
        y[i] = (2.0 * z[i]).sin() + x.row(i).sum() + eps;
    }
    Dataset::new(y, z, x, w).unwrap()
}

/// Uniform draw in `[lo, hi)` from a dedicated stream.
pub fn uniform(seed: u64, lo: f64, hi: f64) -> f64 {
    RandomStream::new(seed, 99).rng().random_range(lo..hi)
}
