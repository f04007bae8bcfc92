use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("corrector solve failed at level {level} (shift 2^{level}·μ)")]
    LevelFailure {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("mask is not normalized: sum = {sum:.17e}")]
    UnnormalizedMask { sum: f64 },

    #[error("cell with {sites} sites exceeds the dense oracle limit of {limit}")]
    OversizeCell { sites: usize, limit: usize },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. } | Error::Eigen(_) => true,
            Error::LevelFailure { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
