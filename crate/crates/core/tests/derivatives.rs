//! Fitted derivatives agree with finite differences of the fitted function.

mod common;

use rkhs_iv::{fit, FitConfig, KernelSpec};

#[test]
fn derivative_matches_central_differences() {
    let step = 1e-5;
    for (c, kernel) in [
        KernelSpec::gaussian(1.0),
        KernelSpec::gaussian(0.4),
        KernelSpec::sobolev(2),
        KernelSpec::sobolev(3),
    ]
    .into_iter()
    .enumerate()
    {
        for standardize in [true, false] {
            let data = common::instance(60, 1, 1, 400 + c as u64);
            let cfg = FitConfig {
                kernel,
                standardize_inputs: standardize,
                ..FitConfig::default()
            }
            .with_lambda(1e-3);
            if kernel.family == rkhs_iv::KernelFamily::Sobolev && !standardize {
                continue; // Raw treatments fall outside the unit interval.
            }
            let fitted = fit(&data, &cfg).unwrap();
            let lo = data.z.min();
            let hi = data.z.max();
            let pts: Vec<f64> = (1..50).map(|i| lo + (hi - lo) * i as f64 / 50.0).collect();
            let deriv = fitted.predict_h_deriv(&pts).unwrap();
            let up: Vec<f64> = pts.iter().map(|z| z + step).collect();
            let down: Vec<f64> = pts.iter().map(|z| z - step).collect();
            let hu = fitted.predict_h(&up).unwrap();
            let hd = fitted.predict_h(&down).unwrap();
            for i in 0..pts.len() {
                let fd = (hu[i] - hd[i]) / (2.0 * step);
                assert!(
                    (fd - deriv[i]).abs() <= 1e-6,
                    "kernel {c} standardize {standardize} z {}: fd {fd} vs {}",
                    pts[i],
                    deriv[i]
                );
            }
            // The AME is the mean of the derivative at the sample points.
            let at_sample = fitted.predict_h_deriv(data.z.as_slice()).unwrap();
            let mean = at_sample.iter().sum::<f64>() / at_sample.len() as f64;
            assert!((mean - fitted.ame().unwrap()).abs() <= 1e-10 * mean.abs().max(1.0));
        }
    }
}
