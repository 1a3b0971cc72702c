use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("not enough samples: got {got}, need at least {min}")]
    InsufficientSamples { got: usize, min: usize },

    #[error("column {column} has zero variance")]
    DegenerateColumn { column: usize },

    #[error("matrix is not positive definite")]
    SingularMatrix,

    #[error("dimension {q} exceeds the supported maximum of {max}")]
    DimensionTooLarge { q: usize, max: usize },

    #[error("CDF tolerance {tol:e} not met after {evals} evaluations (estimate {estimate}, error {error:e})")]
    AccuracyNotMet { estimate: f64, error: f64, tol: f64, evals: usize },

    #[error("root finding failed: {0}")]
    Numerical(String),

    #[error("grid of {cells} cells exceeds the cap of {cap}")]
    Resource { cells: u128, cap: u128 },

    #[error("tau = {tau} lies outside the grid CDF range [{min}, {max}]")]
    EmptyQuantileSet { tau: f64, min: f64, max: f64 },

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("resample degenerate after {attempts} attempts")]
    DegenerateResample { attempts: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Input and file errors map to exit code 2; everything numerical maps to 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::InsufficientSamples { .. }
            | Error::DimensionTooLarge { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
