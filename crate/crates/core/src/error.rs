use thiserror::Error;

/// Errors raised by the estimation, inference and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("kernel has no continuous first derivative: {0}")]
    UnsupportedDerivative(String),

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: need at least {needed} observations, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("collinear linear regressors: {0}")]
    Collinearity(String),

    #[error("regularization selection failed: {0}")]
    Selection(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

/// Coarse classification used by front ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::InvalidInput(_)
            | Error::Domain(_)
            | Error::DegenerateScale(_)
            | Error::InsufficientData { .. }
            | Error::Collinearity(_) => ErrorKind::Data,
            Error::UnsupportedDerivative(_) => ErrorKind::Config,
            Error::Selection(_) | Error::Numeric(_) => ErrorKind::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
