//! Human tables, CSV tables and the structured report.

use std::fmt::Write;

use crate::args::Format;
use crate::commands::Outcome;
use crate::report::Report;

/// Renders an outcome in the requested format.
pub fn render(outcome: &Outcome, format: Format) -> String {
    match format {
        Format::Report => {
            let mut s = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Csv => outcome.csv.clone().unwrap_or_default(),
        Format::Table => table(&outcome.report, outcome.csv.as_deref()),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

/// `quantity,value` rows of the point estimate.
pub fn estimate_csv(report: &Report) -> String {
    let mut s = String::from("quantity,value\n");
    if let Some(f) = &report.fit {
        writeln!(s, "lambda,{}", f.lambda).unwrap();
        writeln!(
            s,
            "theta_hat,{}",
            f.theta_hat.map_or_else(String::new, |t| t.to_string())
        )
        .unwrap();
        for b in &f.beta {
            writeln!(s, "beta_{},{}", b.name, b.value).unwrap();
        }
        writeln!(s, "foc_residual,{}", f.foc_residual).unwrap();
    }
    s
}

/// One row per level.
pub fn inference_csv(report: &Report) -> String {
    let mut s =
        String::from("alpha,theta_hat,theta0,q_hat,c_hat,ci_lower,ci_upper,reject,p_value\n");
    let theta = report.fit.as_ref().and_then(|f| f.theta_hat);
    if let Some(inf) = &report.inference {
        for l in &inf.levels {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                l.alpha,
                theta.map_or_else(String::new, |t| t.to_string()),
                inf.theta_h0.map_or_else(String::new, |t| t.to_string()),
                l.q_hat,
                l.c_hat,
                l.ci_lower,
                l.ci_upper,
                l.reject.map_or_else(String::new, |r| r.to_string()),
                inf.p_value.map_or_else(String::new, |p| p.to_string()),
            )
            .unwrap();
        }
    }
    s
}

/// Criterion at every grid point.
pub fn cv_csv(report: &Report) -> String {
    let mut s = String::from("lambda,criterion,selected\n");
    if let Some(cv) = &report.cv {
        for (i, g) in cv.grid.iter().enumerate() {
            writeln!(
                s,
                "{},{},{}",
                g.lambda,
                g.criterion.map_or_else(String::new, |c| c.to_string()),
                i == cv.selected_index
            )
            .unwrap();
        }
    }
    s
}

fn table(report: &Report, csv: Option<&str>) -> String {
    if report.command == "simulate" && report.simulation.is_none() {
        // One simulated sample: the data set is the table.
        return csv.unwrap_or_default().to_string();
    }
    let mut s = String::new();
    writeln!(s, "rkhs-iv {} {}", report.version, report.command).unwrap();
    if let Some(d) = &report.data {
        writeln!(
            s,
            "data: {} ({} rows used, {} dropped)",
            d.input, d.n, d.dropped_rows
        )
        .unwrap();
    }
    if let Some(cv) = &report.cv {
        writeln!(
            s,
            "\ncross-validation ({} + {} observations)",
            cv.fold_sizes[0], cv.fold_sizes[1]
        )
        .unwrap();
        writeln!(s, "  {:>14}  {:>16}", "lambda", "criterion").unwrap();
        for (i, g) in cv.grid.iter().enumerate() {
            let mark = if i == cv.selected_index { " *" } else { "" };
            let c = g
                .criterion
                .map_or_else(|| "failed".to_string(), |c| format!("{c:.6e}"));
            writeln!(s, "  {:>14.6e}  {:>16}{mark}", g.lambda, c).unwrap();
        }
    }
    if let Some(f) = &report.fit {
        writeln!(s, "\nestimate").unwrap();
        writeln!(s, "  lambda        {:.6e} ({})", f.lambda, f.lambda_source).unwrap();
        writeln!(s, "  AME           {}", opt(f.theta_hat)).unwrap();
        for b in &f.beta {
            writeln!(s, "  beta[{}]  {:.6}", b.name, b.value).unwrap();
        }
        writeln!(
            s,
            "  FOC residual  {:.3e} (rhs norm {:.3e})",
            f.foc_residual, f.rhs_norm
        )
        .unwrap();
    }
    if let Some(inf) = &report.inference {
        writeln!(
            s,
            "\nbootstrap ({} replications, {})",
            inf.replications, inf.tails
        )
        .unwrap();
        if let Some(h0) = inf.theta_h0 {
            writeln!(s, "  H0: AME = {h0:.6}    p-value {}", opt(inf.p_value)).unwrap();
        }
        writeln!(
            s,
            "  {:>6}  {:>10}  {:>10}  {:>24}  {:>7}",
            "alpha", "q_hat", "c_hat", "interval", "reject"
        )
        .unwrap();
        for l in &inf.levels {
            let reject = l.reject.map_or("-", |r| if r { "yes" } else { "no" });
            let interval = format!("[{:.6}, {:.6}]", l.ci_lower, l.ci_upper);
            writeln!(
                s,
                "  {:>6}  {:>10.6}  {:>10.6}  {:>24}  {:>7}",
                l.alpha, l.q_hat, l.c_hat, interval, reject
            )
            .unwrap();
        }
    }
    if let Some(sim) = &report.simulation {
        writeln!(
            s,
            "\nsimulation: {} design, {} h0, rho {}, n {}, R {}",
            sim.spec.design.label(),
            sim.spec.h0.label(),
            sim.spec.rho_eps_v,
            sim.spec.n,
            sim.replications
        )
        .unwrap();
        writeln!(
            s,
            "  true AME {:.6}, mean estimate {:.6}",
            sim.spec.true_ame(),
            sim.mean_theta_hat
        )
        .unwrap();
        writeln!(
            s,
            "  {:>6}  {:>6}  {:>9}  {:>9}  {:>9}",
            "gamma", "alpha", "rate", "mc_se", "2sls"
        )
        .unwrap();
        for r in &sim.rows {
            writeln!(
                s,
                "  {:>6.3}  {:>6}  {:>9.4}  {:>9.4}  {:>9.4}",
                r.gamma, r.level, r.rejection_rate, r.mc_stderr, r.twosls_rate
            )
            .unwrap();
        }
    }
    for w in &report.warnings {
        writeln!(s, "warning: {w}").unwrap();
    }
    s
}
