use thiserror::Error;

/// Crate-wide error type.
///
/// `Invalid` covers precondition violations (bad shapes, out-of-range
/// parameters, malformed configs); `Numerical` covers failures of the
/// numerics themselves (diverging integration, non-converging solvers,
/// singular systems beyond rescue). The CLI maps the two to distinct
/// exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Exit code for the CLI: validation errors exit 2, numerical
    /// failures exit 3, everything else 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Parse(_) => 2,
            Error::Numerical(_) => 3,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
