use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix has a non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is numerically singular (sigma_min/sigma_max = {ratio:e})")]
    Singular { ratio: f64 },

    #[error("eigenvalue solver did not converge")]
    EigenFailure,

    #[error("exact oracle unavailable: {which} is not diagonalizable (residual {residual:e})")]
    OracleUnavailable { which: &'static str, residual: f64 },

    #[error("contour margin violated: eigenvalue {eigenvalue} lies {distance:e} from a circle of radius {radius:e}")]
    ContourMargin {
        eigenvalue: String,
        distance: f64,
        radius: f64,
    },

    #[error("contour does not enclose eigenvalue {eigenvalue}")]
    NotEnclosed { eigenvalue: String },

    #[error("contour circles {first} and {second} overlap")]
    OverlappingCircles { first: usize, second: usize },

    #[error("function singularity ({what}) meets contour circle {circle}")]
    SingularityInContour { what: String, circle: usize },

    #[error("spectrum point {point} is outside the domain of the function ({why})")]
    OutsideDomain { point: String, why: String },

    #[error("eigenvalue clusters not separated: gap {gap:e} <= 4 * cluster tolerance {tol:e}")]
    ClusterSeparation { gap: f64, tol: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    MatrixFile(#[from] MatrixFileError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Failures reading a matrix document. Each variant maps to its own code.
#[derive(Debug, Error)]
pub enum MatrixFileError {
    #[error("{path}: malformed matrix document at line {line}, column {column}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: data has {len} entries but dim {dim} needs {expected}")]
    LengthMismatch {
        path: PathBuf,
        dim: usize,
        len: usize,
        expected: usize,
    },

    #[error("{path}: entry {index} is not finite")]
    NonFinite { path: PathBuf, index: usize },
}

impl MatrixFileError {
    pub fn code(&self) -> &'static str {
        match self {
            MatrixFileError::Malformed { .. } => "E_MALFORMED",
            MatrixFileError::LengthMismatch { .. } => "E_LENGTH",
            MatrixFileError::NonFinite { .. } => "E_NONFINITE",
        }
    }
}
