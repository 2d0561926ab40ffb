use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("time {t} lies outside the plan horizon [{start}, {end}]")]
    OutOfDomain { t: f64, start: f64, end: f64 },

    #[error("horizon mismatch: {0}")]
    DomainMismatch(String),

    #[error("the pair (A, B) is not stabilizable")]
    NotStabilizable,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("simulation diverged at t = {t:.4} s (|x|_inf = {norm:.3e})")]
    SimulationDiverged { t: f64, norm: f64 },

    #[error("infeasible bounds: {0}")]
    InfeasibleBounds(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotStabilizable
            | Error::NumericalFailure(_)
            | Error::SimulationDiverged { .. } => 3,
            Error::InfeasibleBounds(_) => 4,
            _ => 2,
        }
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "ValidationError",
            Error::Parse { .. } => "ParseError",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::OutOfDomain { .. } => "OutOfDomain",
            Error::DomainMismatch(_) => "DomainMismatch",
            Error::NotStabilizable => "NotStabilizable",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::SimulationDiverged { .. } => "SimulationDiverged",
            Error::InfeasibleBounds(_) => "InfeasibleBounds",
            Error::Io(_) => "IoError",
        }
    }
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
