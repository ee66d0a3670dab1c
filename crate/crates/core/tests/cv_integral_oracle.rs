//! The cross-validation quadratic form against Monte Carlo integration of
//! the criterion it represents:
//! `E_t |(1/n) sum_i r_i exp(i t'V_i)|^2` with `t ~ mu`.

mod common;

use nalgebra::DMatrix;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rkhs_iv::selection::{cv_criterion, cv_residuals, make_folds};
use rkhs_iv::{Conditioning, FitConfig, MuSpec, Problem, RandomStream};

/// Rows entering the weighting matrix, after the estimator's preprocessing.
fn conditioning_rows(data: &rkhs_iv::Dataset, cfg: &FitConfig) -> DMatrix<f64> {
    let problem = Problem::new(data, cfg).unwrap();
    let maps = problem.conditioning_maps();
    let raw: Vec<_> = match cfg.conditioning {
        Conditioning::XandW => data.x.column_iter().chain(data.w.column_iter()).collect(),
        Conditioning::WOnly => data.w.column_iter().collect(),
    };
    DMatrix::from_fn(data.n(), raw.len(), |i, c| maps[c].apply(raw[c][i]))
}

/// One draw from the product measure, built from elementary variates.
fn draw_t(mu: MuSpec, q: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    (0..q)
        .map(|_| match mu {
            // Laplace(0, 1/sqrt 2) as a scaled difference of unit exponentials.
            MuSpec::LaplaceProduct => {
                let a: f64 = Exp1.sample(rng);
                let b: f64 = Exp1.sample(rng);
                (a - b) * std::f64::consts::FRAC_1_SQRT_2
            }
            MuSpec::GaussianProduct => StandardNormal.sample(rng),
        })
        .collect()
}

#[test]
fn quadratic_form_equals_the_integral() {
    let draws = 100_000;
    for instance in 0..10u64 {
        let p = (instance % 3) as usize;
        let n = 20 + 8 * instance as usize;
        let data = common::instance(n, p, 1 + (instance % 2) as usize, 500 + instance);
        let cfg = FitConfig {
            mu: if instance % 4 == 3 {
                MuSpec::GaussianProduct
            } else {
                MuSpec::LaplaceProduct
            },
            include_intercept: instance % 2 == 1,
            ..FitConfig::default()
        }
        .with_lambda(10f64.powf(common::uniform(instance, -5.0, -1.0)));
        let split = make_folds(n, RandomStream::new(instance, 1)).unwrap();
        let exact = cv_criterion(&data, &cfg, &split).unwrap();
        let r = cv_residuals(&data, &cfg, &split).unwrap();
        let v = conditioning_rows(&data, &cfg);

        let mut rng = RandomStream::new(instance, 2).rng();
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..draws {
            let t = draw_t(cfg.mu, v.ncols(), &mut rng);
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..n {
                let phase: f64 = (0..v.ncols()).map(|c| t[c] * v[(i, c)]).sum();
                re += r[i] * phase.cos();
                im += r[i] * phase.sin();
            }
            let value = (re * re + im * im) / (n * n) as f64;
            sum += value;
            sum_sq += value * value;
        }
        let mean = sum / draws as f64;
        let se = ((sum_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * se,
            "instance {instance}: quadratic form {exact}, integral {mean} +- {se}"
        );
    }
}
