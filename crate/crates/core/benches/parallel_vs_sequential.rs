//! Parallel against sequential execution of the three data-parallel
//! workloads: bootstrap draws, the cross-validation grid, and Monte Carlo
//! replications.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rkhs_iv::inference::{BootstrapConfig, BootstrapDistribution};
use rkhs_iv::selection::{select_lambda, LambdaGrid};
use rkhs_iv::simulation::{
    draw_sample, run_size_experiment, DgpSpec, MonteCarloConfig, TreatmentFunction,
};
use rkhs_iv::{fit, Execution, FitConfig, RandomStream};

const MODES: [(&str, Execution); 2] = [
    ("parallel", Execution::Parallel),
    ("sequential", Execution::Sequential),
];

fn bootstrap(c: &mut Criterion) {
    let spec = DgpSpec::new(TreatmentFunction::Quadratic, 0.5, 100);
    let data = draw_sample(&spec, RandomStream::new(1, 0));
    let fitted = fit(&data, &FitConfig::default().with_lambda(1e-3)).unwrap();
    let mut group = c.benchmark_group("bootstrap_n100_b99");
    group.sample_size(10);
    for (name, execution) in MODES {
        let bcfg = BootstrapConfig {
            replications: 99,
            execution,
            ..BootstrapConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| BootstrapDistribution::from_fit(&fitted, &bcfg).unwrap())
        });
    }
    group.finish();
}

fn cross_validation(c: &mut Criterion) {
    let spec = DgpSpec::new(TreatmentFunction::Quadratic, 0.5, 200);
    let data = draw_sample(&spec, RandomStream::new(2, 0));
    let grid = LambdaGrid::default();
    let mut group = c.benchmark_group("cv_grid30_n200");
    group.sample_size(10);
    for (name, execution) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                select_lambda(
                    &data,
                    &FitConfig::default(),
                    &grid,
                    RandomStream::new(3, 0),
                    execution,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let spec = DgpSpec::new(TreatmentFunction::Quadratic, 0.5, 100);
    let mut group = c.benchmark_group("warp_speed_r40_n100");
    group.sample_size(10);
    for (name, execution) in MODES {
        let mc = MonteCarloConfig {
            replications: 40,
            execution,
            ..MonteCarloConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_size_experiment(&spec, &mc).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bootstrap, cross_validation, monte_carlo);
criterion_main!(benches);
