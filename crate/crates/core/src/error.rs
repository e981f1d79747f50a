use thiserror::Error;

/// Errors produced by the library.
///
/// Variants map onto the CLI exit codes: argument/domain problems exit with 2,
/// numerical and estimation failures with 3, I/O with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("singularity at step {step}: {msg}")]
    Singular { step: usize, msg: String },

    #[error("convergence error: {0}")]
    Convergence(String),

    #[error("decomposition error: {0}")]
    Decomposition(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Domain(_) | Error::Argument(_) => 2,
            Error::Estimation(_)
            | Error::Singular { .. }
            | Error::Convergence(_)
            | Error::Decomposition(_) => 3,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
