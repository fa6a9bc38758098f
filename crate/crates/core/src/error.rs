use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("index {index} outside table domain [{start}, {end}]")]
    Domain { index: isize, start: isize, end: isize },

    #[error("implicit step is singular (1 - h/2 * {diagonal} = {pivot}); use a smaller step h")]
    StepSize { diagonal: f64, pivot: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error("insufficient horizon: {0}")]
    InsufficientHorizon(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
