//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("non-monotonic axis: wavelength axis must be strictly increasing")]
    NonMonotonicAxis,

    #[error("ragged row: row {row} has {got} values, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("negative intensity at row {row}, column {col}")]
    NegativeIntensity { row: usize, col: usize },

    #[error("duplicate timestamp at index {0}")]
    DuplicateTimestamp(usize),

    #[error("timestamps not strictly increasing at index {0}")]
    NonIncreasingTime(usize),

    #[error("non-uniform sampling: step deviates at index {index} by {deviation:.3e} s")]
    NonUniformSampling { index: usize, deviation: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("trace extraction failed: {non_converged} of {frames} frames did not converge (> 20%)")]
    TooManyNonConverged { non_converged: usize, frames: usize },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
