//! Command errors and their process exit codes.

use std::fmt;

use rkhs_iv::ErrorKind;

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Failure to read or write files.
pub const EXIT_IO: i32 = 1;
/// Invalid flags, unknown columns or unsupported option combinations.
pub const EXIT_CONFIG: i32 = 2;
/// Unusable input data: no rows, collinear regressors, degenerate columns.
pub const EXIT_DATA: i32 = 3;
/// Numerical failures: no finite CV criterion, failed factorizations.
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rkhs_iv::Error> for CliError {
    fn from(e: rkhs_iv::Error) -> Self {
        let msg = e.to_string();
        match e.kind() {
            ErrorKind::Config => CliError::Config(msg),
            ErrorKind::Data => CliError::Data(msg),
            ErrorKind::Numeric => CliError::Numeric(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
