use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The measurement record is essentially impossible under the model, which
    /// usually means the supplied parameters are grossly wrong.
    #[error("likelihood underflow at bin {bin} (log-likelihood {log_likelihood})")]
    LikelihoodUnderflow { bin: usize, log_likelihood: f64 },

    #[error("degenerate normalization: {0}")]
    Degenerate(String),

    #[error("optimizer did not converge: {0}")]
    NoConvergence(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// Process exit code: 2 for bad input or configuration, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParams(_) | Error::InvalidInput(_) | Error::Format { .. } | Error::Io { .. } => 2,
            Error::InvalidState(_)
            | Error::LikelihoodUnderflow { .. }
            | Error::Degenerate(_)
            | Error::NoConvergence(_) => 3,
        }
    }
}
