//! The five commands, each producing a [`Report`] plus any CSV artifact.

use std::time::Instant;

use rkhs_iv::inference::{BootstrapConfig, BootstrapDistribution, PValueMode, WeightFamily};
use rkhs_iv::selection::{select_lambda, LambdaGrid, Selection};
use rkhs_iv::simulation::{
    self, draw_sample, run_power_curve, run_size_experiment, DgpDesign, DgpSpec, McMode,
    MonteCarloConfig, TreatmentFunction,
};
use rkhs_iv::{
    fit, Conditioning, Dataset, Execution, Fit, FitConfig, KernelSpec, MuSpec, RandomStream,
};
use serde::Serialize;

use crate::args::{
    BootstrapArgs, CiArgs, ConditioningArg, CvArgs, DataArgs, DesignArg, EstimateArgs, Experiment,
    H0Arg, KernelArg, McModeArg, ModelArgs, MuArg, SimulateArgs, TailMode, TestArgs,
};
use crate::data::{load_csv, write_dataset_csv, ColumnMapping, LoadedData};
use crate::error::CliError;
use crate::report::{
    CvSummary, DataSummary, FitSummary, GridPoint, InferenceSummary, LevelResult, NamedValue,
    Report,
};

/// Stream labels derived from the user seed.
const FOLD_LABEL: u64 = 1;
const BOOTSTRAP_LABEL: u64 = 2;

/// What a command produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Report,
    /// Primary CSV table, when the command has a natural one.
    pub csv: Option<String>,
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("flags serialize")
}

/// Configuration echo; keys keep the given order.
fn echo(parts: Vec<(&str, serde_json::Value)>) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for (k, v) in parts {
        map.insert(k.to_string(), v);
    }
    serde_json::Value::Object(map)
}

pub fn fit_config(model: &ModelArgs) -> Result<FitConfig, CliError> {
    let kernel = match model.kernel {
        KernelArg::Gaussian => KernelSpec::gaussian(model.length_scale),
        KernelArg::Sobolev1 => KernelSpec::sobolev(1),
        KernelArg::Sobolev2 => KernelSpec::sobolev(2),
    };
    kernel.validate()?;
    if let Some(l) = model.lambda {
        if !(l > 0.0 && l.is_finite()) {
            return Err(CliError::Config(format!(
                "--lambda must be positive, got {l}"
            )));
        }
    }
    if model.workers == Some(0) {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    Ok(FitConfig {
        kernel,
        mu: match model.mu {
            MuArg::Laplace => MuSpec::LaplaceProduct,
            MuArg::Gaussian => MuSpec::GaussianProduct,
        },
        lambda: model.lambda.unwrap_or(FitConfig::default().lambda),
        standardize_inputs: model.standardize.is_on(),
        conditioning: match model.conditioning {
            ConditioningArg::Xw => Conditioning::XandW,
            ConditioningArg::W => Conditioning::WOnly,
        },
        include_intercept: model.intercept.is_on(),
        ..FitConfig::default()
    })
}

pub fn lambda_grid(model: &ModelArgs) -> Result<LambdaGrid, CliError> {
    Ok(match model.lambda_grid {
        Some(g) => LambdaGrid::geometric(g.min, g.max, g.count)?,
        None => LambdaGrid::default(),
    })
}

fn execution(model: &ModelArgs) -> Execution {
    if model.workers == Some(1) {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn load(data: &DataArgs) -> Result<(LoadedData, DataSummary), CliError> {
    let mapping = ColumnMapping {
        y: data.y.clone(),
        z: data.z.clone(),
        x: data.x.clone(),
        w: data.w.clone(),
    };
    let loaded = load_csv(&data.input, &mapping)?;
    let summary = DataSummary {
        input: data.input.display().to_string(),
        rows_read: loaded.rows_read,
        dropped_rows: loaded.dropped_rows,
        n: loaded.dataset.n(),
        y: mapping.y,
        z: mapping.z,
        x: mapping.x,
        w: mapping.w,
    };
    Ok((loaded, summary))
}

fn data_warnings(summary: &DataSummary, report: &mut Report) {
    if summary.dropped_rows > 0 {
        report.warnings.push(format!(
            "{} of {} rows dropped for missing or non-numeric values",
            summary.dropped_rows, summary.rows_read
        ));
    }
}

fn cv_summary(sel: &Selection) -> CvSummary {
    CvSummary {
        selected_lambda: sel.lambda,
        selected_index: sel.grid.argmin.expect("selection has an argmin"),
        fold_sizes: [sel.split.s1.len(), sel.split.s2.len()],
        grid: sel
            .grid
            .values
            .iter()
            .zip(&sel.grid.criteria)
            .map(|(&lambda, &c)| GridPoint {
                lambda,
                criterion: c.is_finite().then_some(c),
            })
            .collect(),
    }
}

/// Cross-validates unless a penalty was given, then fits.
fn select_and_fit(
    dataset: &Dataset,
    cfg: &FitConfig,
    model: &ModelArgs,
    report: &mut Report,
) -> Result<Fit, CliError> {
    let (lambda, source) = match model.lambda {
        Some(l) => (l, "fixed"),
        None => {
            let folds = RandomStream::new(model.seed, 0).derive(FOLD_LABEL);
            let sel = select_lambda(dataset, cfg, &lambda_grid(model)?, folds, execution(model))?;
            let lambda = sel.lambda;
            let summary = cv_summary(&sel);
            if summary.selected_index == 0 || summary.selected_index + 1 == summary.grid.len() {
                report.warnings.push(format!(
                    "selected penalty {lambda:e} lies on the edge of the grid"
                ));
            }
            report.cv = Some(summary);
            (lambda, "cv")
        }
    };
    let fitted = fit(dataset, &cfg.with_lambda(lambda))?;
    let theta_hat = match fitted.ame() {
        Ok(t) => Some(t),
        Err(rkhs_iv::Error::UnsupportedDerivative(_)) => {
            report
                .warnings
                .push("the kernel has no derivative; the AME is not available".into());
            None
        }
        Err(e) => return Err(e.into()),
    };
    let mut names = model_beta_names(report);
    if cfg.include_intercept {
        names.push("intercept".into());
    }
    if fitted.duplicate_treatment() {
        report
            .warnings
            .push("the treatment has duplicated values".into());
    }
    report.fit = Some(FitSummary {
        lambda,
        lambda_source: source,
        theta_hat,
        beta: names
            .into_iter()
            .zip(fitted.beta.iter())
            .map(|(name, &value)| NamedValue { name, value })
            .collect(),
        foc_residual: fitted.foc_residual,
        rhs_norm: fitted.rhs_norm,
        effective_rank: fitted.effective_rank,
        rank_deficient: fitted.rank_deficient,
        duplicate_treatment: fitted.duplicate_treatment(),
        duplicate_conditioning: fitted.duplicate_conditioning(),
    });
    Ok(fitted)
}

fn model_beta_names(report: &Report) -> Vec<String> {
    report
        .data
        .as_ref()
        .map(|d| d.x.clone())
        .unwrap_or_default()
}

pub fn estimate(args: &EstimateArgs) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let cfg = fit_config(&args.model)?;
    let mut report = Report::new(
        "estimate",
        echo(vec![
            ("data", json(&args.data)),
            ("model", json(&args.model)),
        ]),
    );
    let (loaded, summary) = load(&args.data)?;
    data_warnings(&summary, &mut report);
    report.data = Some(summary);
    select_and_fit(&loaded.dataset, &cfg, &args.model, &mut report)?;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    let csv = crate::render::estimate_csv(&report);
    Ok(Outcome {
        report,
        csv: Some(csv),
    })
}

fn bootstrap(
    fitted: &Fit,
    boot: &BootstrapArgs,
    model: &ModelArgs,
    theta_h0: Option<f64>,
    report: &mut Report,
) -> Result<(), CliError> {
    if boot.alpha.is_empty() || boot.alpha.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return Err(CliError::Config("--alpha levels must lie in (0,1)".into()));
    }
    if boot.b == 0 {
        return Err(CliError::Config("--B must be at least 1".into()));
    }
    let mode = match boot.tails {
        TailMode::Symmetric => PValueMode::Symmetric,
        TailMode::EqualTail => PValueMode::EqualTail,
    };
    let bcfg = BootstrapConfig {
        replications: boot.b,
        weight_family: WeightFamily::Exponential,
        seed: RandomStream::new(model.seed, 0)
            .derive(BOOTSTRAP_LABEL)
            .seed,
        mode,
        execution: execution(model),
        ..BootstrapConfig::default()
    };
    let dist = BootstrapDistribution::from_fit(fitted, &bcfg)?;
    let mut levels = Vec::with_capacity(boot.alpha.len());
    for &alpha in &boot.alpha {
        let ci = dist.confidence_interval(alpha, mode)?;
        let q_hat = dist.q_hat(alpha)?;
        let reject = match theta_h0 {
            Some(h0) => Some(dist.decide(h0, alpha, mode)?.reject),
            None => None,
        };
        levels.push(LevelResult {
            alpha,
            q_hat,
            c_hat: (dist.n as f64).sqrt() * q_hat,
            ci_lower: ci.lower,
            ci_upper: ci.upper,
            reject,
        });
    }
    if dist.few_replications() {
        report.warnings.push(format!(
            "only {} bootstrap replications; quantiles are unreliable",
            boot.b
        ));
    }
    report.inference = Some(InferenceSummary {
        replications: boot.b,
        tails: match mode {
            PValueMode::Symmetric => "symmetric",
            PValueMode::EqualTail => "equal-tail",
        },
        theta_h0,
        p_value: theta_h0.map(|h0| dist.p_value(h0, mode)),
        few_replications: dist.few_replications(),
        levels,
    });
    Ok(())
}

pub fn test(args: &TestArgs) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let cfg = fit_config(&args.model)?;
    if !args.theta0.is_finite() {
        return Err(CliError::Config("--theta0 must be finite".into()));
    }
    let mut report = Report::new(
        "test",
        echo(vec![
            ("data", json(&args.data)),
            ("model", json(&args.model)),
            ("bootstrap", json(&args.bootstrap)),
            ("theta0", json(&args.theta0)),
        ]),
    );
    let (loaded, summary) = load(&args.data)?;
    data_warnings(&summary, &mut report);
    report.data = Some(summary);
    let fitted = select_and_fit(&loaded.dataset, &cfg, &args.model, &mut report)?;
    require_ame(&report)?;
    bootstrap(
        &fitted,
        &args.bootstrap,
        &args.model,
        Some(args.theta0),
        &mut report,
    )?;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    let csv = crate::render::inference_csv(&report);
    Ok(Outcome {
        report,
        csv: Some(csv),
    })
}

pub fn ci(args: &CiArgs) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let cfg = fit_config(&args.model)?;
    let mut report = Report::new(
        "ci",
        echo(vec![
            ("data", json(&args.data)),
            ("model", json(&args.model)),
            ("bootstrap", json(&args.bootstrap)),
        ]),
    );
    let (loaded, summary) = load(&args.data)?;
    data_warnings(&summary, &mut report);
    report.data = Some(summary);
    let fitted = select_and_fit(&loaded.dataset, &cfg, &args.model, &mut report)?;
    require_ame(&report)?;
    bootstrap(&fitted, &args.bootstrap, &args.model, None, &mut report)?;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    let csv = crate::render::inference_csv(&report);
    Ok(Outcome {
        report,
        csv: Some(csv),
    })
}

fn require_ame(report: &Report) -> Result<(), CliError> {
    match report.fit.as_ref().and_then(|f| f.theta_hat) {
        Some(_) => Ok(()),
        None => Err(CliError::Config(
            "inference on the AME needs a differentiable kernel (gaussian or sobolev2)".into(),
        )),
    }
}

pub fn cv(args: &CvArgs) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let cfg = fit_config(&args.model)?;
    if args.model.lambda.is_some() {
        return Err(CliError::Config(
            "cv selects the penalty; use --lambda-grid instead of --lambda".into(),
        ));
    }
    let mut report = Report::new(
        "cv",
        echo(vec![
            ("data", json(&args.data)),
            ("model", json(&args.model)),
        ]),
    );
    let (loaded, summary) = load(&args.data)?;
    data_warnings(&summary, &mut report);
    report.data = Some(summary);
    select_and_fit(&loaded.dataset, &cfg, &args.model, &mut report)?;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    let csv = crate::render::cv_csv(&report);
    Ok(Outcome {
        report,
        csv: Some(csv),
    })
}

pub fn dgp_spec(args: &SimulateArgs) -> Result<DgpSpec, CliError> {
    let spec = DgpSpec {
        design: match args.design {
            DesignArg::Nonparametric => DgpDesign::FullyNonparametric,
            DesignArg::PartiallyLinear => DgpDesign::PartiallyLinear,
        },
        rho_zw: args.rho_zw,
        ..DgpSpec::new(
            match args.h0 {
                H0Arg::Quadratic => TreatmentFunction::Quadratic,
                H0Arg::Nonpolynomial => TreatmentFunction::NonPolynomial,
            },
            args.rho,
            args.n,
        )
    };
    spec.validate()?;
    Ok(spec)
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let cfg = fit_config(&args.model)?;
    let spec = dgp_spec(args)?;
    let mut report = Report::new("simulate", echo(vec![("simulate", json(args))]));
    if args.experiment == Experiment::Sample {
        let data = draw_sample(&spec, RandomStream::new(args.model.seed, 0));
        let mut buf = Vec::new();
        write_dataset_csv(&data, &mut buf)?;
        report.wall_time_secs = start.elapsed().as_secs_f64();
        return Ok(Outcome {
            report,
            csv: Some(String::from_utf8(buf).expect("CSV is UTF-8")),
        });
    }
    if args.r < simulation::MIN_REPLICATIONS {
        report.warnings.push(format!(
            "R = {} is below {}; rates are indicative only",
            args.r,
            simulation::MIN_REPLICATIONS
        ));
    }
    let mc = MonteCarloConfig {
        replications: args.r,
        levels: args.alpha.clone(),
        seed: args.model.seed,
        mode: match args.mc_mode {
            McModeArg::Warp => McMode::WarpSpeed,
            McModeArg::Full => McMode::FullBootstrap {
                replications: args.b,
            },
        },
        fit: cfg,
        grid: lambda_grid(&args.model)?,
        fixed_lambda: args.model.lambda,
        weight_family: WeightFamily::Exponential,
        execution: execution(&args.model),
    };
    let sim = match args.experiment {
        Experiment::Size => run_size_experiment(&spec, &mc)?,
        Experiment::Power => {
            if args.gamma.is_empty() || args.gamma.iter().any(|g| !g.is_finite()) {
                return Err(CliError::Config(
                    "--gamma must be a non-empty list of numbers".into(),
                ));
            }
            run_power_curve(&spec, &args.gamma, &mc)?
        }
        Experiment::Sample => unreachable!("handled above"),
    };
    let mut buf = Vec::new();
    match args.experiment {
        Experiment::Size => simulation::write_size_csv(&sim, &mut buf)?,
        _ => simulation::write_power_csv(&sim, &mut buf)?,
    }
    report.simulation = Some(sim);
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(Outcome {
        report,
        csv: Some(String::from_utf8(buf).expect("CSV is UTF-8")),
    })
}
