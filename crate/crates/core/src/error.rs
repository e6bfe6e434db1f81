use thiserror::Error;

/// Errors raised by the numerical core and the persistence layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Gram-Schmidt (or column normalization) found a column with no
    /// component outside the span of the previous ones.
    #[error("rank deficient input: column {column} has residual norm {residual:e}")]
    RankDeficient { column: usize, residual: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate sketch (seed {seed}): smallest singular value {sigma_min:e}")]
    DegenerateSketch { seed: u64, sigma_min: f64 },

    #[error("{what} did not converge (residual {residual:e})")]
    NoConvergence { what: &'static str, residual: f64 },

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("calibration mismatch: {0}")]
    CalibrationMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status used by the command-line tool.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::InvalidInput(_) => 2,
            Error::Parse(_) => 3,
            Error::DimensionMismatch(_) => 4,
            Error::DegenerateSketch { .. } => 5,
            Error::Calibration(_) | Error::CalibrationMismatch(_) => 6,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
