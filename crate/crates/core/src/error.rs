use thiserror::Error;

/// Errors raised by the smoothing library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("stencil order {0} is not supported (maximum is 4)")]
    UnsupportedOrder(usize),

    #[error("no admissible stencil of order {order} at half-width {half_width}")]
    InfeasibleWidth { order: usize, half_width: usize },

    #[error("stencil of order {order} at half-width {half_width} is not unique (solution space has dimension {dim})")]
    NonUnique {
        order: usize,
        half_width: usize,
        dim: usize,
    },

    #[error("stencil family is missing order {0}")]
    MissingOrder(usize),

    #[error("curve of length {len} is too short (need at least {min})")]
    CurveTooShort { len: usize, min: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("smoother is the identity (trace equals dimension), GCV is undefined")]
    DegenerateDenominator,

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("singular system: {0}")]
    Singular(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
