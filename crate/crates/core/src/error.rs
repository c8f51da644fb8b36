use thiserror::Error;

/// Errors raised by calibration, models, scores and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("model lacks required capability: {0}")]
    MissingCapability(&'static str),

    #[error("invalid model output: {0}")]
    InvalidModel(String),

    #[error("degenerate threshold: {0}")]
    DegenerateThreshold(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Numerical(_) | Error::InvalidModel(_) | Error::DegenerateThreshold(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
