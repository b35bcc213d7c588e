use thiserror::Error;

/// Errors raised by model construction, LMI assembly and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("symbol {value} is outside the {alphabet} alphabet")]
    Alphabet { alphabet: &'static str, value: i64 },

    #[error("subsystem {subsystem} admits no certificate in the supply-rate family: {reason}")]
    LocalInfeasible { subsystem: usize, reason: String },

    #[error("the interconnection admits no global certificate: {0}")]
    GlobalInfeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
