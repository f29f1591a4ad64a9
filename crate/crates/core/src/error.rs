use std::path::PathBuf;

use crate::units::Dimension;

/// Every failure the library can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: Dimension, right: Dimension },

    #[error("division by zero")]
    DivisionByZero,

    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range for {axis} of length {len}")]
    IndexError {
        axis: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("inconsistent input: {0}")]
    InconsistentInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("scenario overflow: {0}")]
    ScenarioOverflow(String),

    #[error("empty plot: {0}")]
    EmptyPlot(String),

    #[error("batch failed: {0}")]
    BatchFailed(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
