use thiserror::Error;

/// Errors raised by grid construction, simulation and pricing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt distribution: {0}")]
    CorruptDistribution(String),
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),
    #[error("non-monotone map: {0}")]
    InvalidMap(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("step size too large: {0}")]
    StepSize(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported payoff: {0}")]
    UnsupportedPayoff(String),
    #[error("grid too large: {0}")]
    GridTooLarge(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True when the error stems from the numerics rather than from the
    /// caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CorruptDistribution(_)
                | Error::DegenerateDistribution(_)
                | Error::Resolution(_)
                | Error::StepSize(_)
                | Error::Domain(_)
                | Error::Numerical(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
