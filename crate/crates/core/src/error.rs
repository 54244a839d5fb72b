use thiserror::Error;

/// Errors raised by the road segmentation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("size mismatch: expected {expected} values, got {actual}")]
    Size { expected: usize, actual: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("underdetermined fit: {available} samples, at least {required} required")]
    Underdetermined { available: usize, required: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("degenerate histogram: all values identical")]
    DegenerateHistogram,
    #[error("insufficient data: {available} path entries, at least {required} required")]
    InsufficientData { available: usize, required: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
