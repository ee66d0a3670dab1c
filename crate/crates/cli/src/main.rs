use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use rkhs_iv_cli::args::Cli;
use rkhs_iv_cli::run;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            if let Some(text) = text {
                let mut out = std::io::stdout().lock();
                if out
                    .write_all(text.as_bytes())
                    .and_then(|_| out.flush())
                    .is_err()
                {
                    return ExitCode::from(rkhs_iv_cli::error::EXIT_IO as u8);
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rkhs-iv: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
