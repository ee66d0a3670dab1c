//! Command-line front end for `rkhs-iv`: CSV ingestion, the estimate, test,
//! ci, cv and simulate commands, and table, CSV or structured-report output.

pub mod args;
pub mod commands;
pub mod data;
pub mod error;
pub mod render;
pub mod report;

use std::fs;

use args::{Cli, Command, ModelArgs, OutputArgs};
use commands::Outcome;
use error::CliError;

fn parts(command: &Command) -> (&ModelArgs, &OutputArgs) {
    match command {
        Command::Estimate(a) => (&a.model, &a.output),
        Command::Test(a) => (&a.model, &a.output),
        Command::Ci(a) => (&a.model, &a.output),
        Command::Cv(a) => (&a.model, &a.output),
        Command::Simulate(a) => (&a.model, &a.output),
    }
}

/// Runs the command without writing anything.
pub fn execute(command: &Command) -> Result<Outcome, CliError> {
    let (model, _) = parts(command);
    let work = || match command {
        Command::Estimate(a) => commands::estimate(a),
        Command::Test(a) => commands::test(a),
        Command::Ci(a) => commands::ci(a),
        Command::Cv(a) => commands::cv(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match model.workers {
        Some(n) if n > 1 => with_workers(n, work),
        _ => work(),
    }
}

#[cfg(feature = "parallel")]
fn with_workers<T: Send>(n: usize, work: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_workers<T: Send>(_n: usize, work: impl FnOnce() -> T + Send) -> T {
    work()
}

/// Runs the command and writes its rendering to `--out` or returns it for
/// standard output.
pub fn run(cli: &Cli) -> Result<Option<String>, CliError> {
    let outcome = execute(&cli.command)?;
    let (_, output) = parts(&cli.command);
    let text = render::render(&outcome, output.format);
    match &output.out {
        Some(path) => {
            fs::write(path, text)
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}
