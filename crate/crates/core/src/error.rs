use thiserror::Error;

/// Errors raised by grid, model, information and estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounds: a={a} must be strictly less than b={b}")]
    InvalidBounds { a: f64, b: f64 },

    #[error("invalid node count {0}: at least 2 nodes are required")]
    InvalidCount(usize),

    #[error("nodes are not strictly increasing at index {index}")]
    NonMonotoneNodes { index: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("cannot normalize: all values are zero")]
    AllZeroInput,

    #[error("invalid density value {value} at index {index}")]
    InvalidValue { index: usize, value: f64 },

    #[error("density not normalized: integral is {integral}")]
    NotNormalized { integral: f64 },

    #[error("support violation at node {index}: p > 0 where q = 0")]
    SupportViolation { index: usize },

    #[error("densities live on different grids")]
    GridMismatch,

    #[error("map is not monotone increasing at node {index} (derivative {derivative})")]
    NonMonotoneMap { index: usize, derivative: f64 },

    #[error("degenerate likelihood: marginal density of observation {index} is zero")]
    DegenerateLikelihood { index: usize },

    #[error("non-positive Fisher information {value} at theta={theta}")]
    NonpositiveInformation { theta: f64, value: f64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite measurement at index {index}")]
    NonFiniteMeasurement { index: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateLikelihood { .. }
                | Error::NonpositiveInformation { .. }
                | Error::SupportViolation { .. }
                | Error::NonMonotoneMap { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
