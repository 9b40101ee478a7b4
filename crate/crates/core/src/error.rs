use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input or configuration.
    #[error("{0}")]
    Validation(String),

    /// Argument outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("kernel matrix numerically singular (jitter escalated to {jitter:e})")]
    Singular { jitter: f64 },

    #[error("log density is not concave near x = {x}")]
    NonConcave { x: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Input and configuration problems, as opposed to numerical or runtime
    /// failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Csv(_) | Error::Json(_) | Error::Domain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
