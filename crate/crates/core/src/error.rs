use thiserror::Error;

/// Errors raised by the multi-task learning routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dataset has no examples")]
    EmptyDataset,

    #[error("invalid label {label} at example {index}: logistic loss expects -1 or +1")]
    InvalidLabel { index: usize, label: f64 },

    #[error("task index {task} out of range for {m} tasks")]
    TaskOutOfRange { task: usize, m: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("penalty weights must be strictly positive (got {0})")]
    NonPositiveWeight(String),

    #[error("infeasible spectral box: {0}")]
    InfeasibleBox(String),

    #[error("matrix contains non-finite entries")]
    NonFiniteInput,

    #[error("non-finite objective at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
