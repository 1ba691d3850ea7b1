use thiserror::Error;

/// Errors produced by the solver and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigensolver failed ({message}); residual {residual:e}")]
    Solver { message: String, residual: f64 },

    #[error("base energy {re}{im:+}i lies on the spectrum (min pivot {min_pivot:e})")]
    SingularBase { re: f64, im: f64, min_pivot: f64 },

    #[error("winding phase {raw} is not quantized after refinement")]
    NotQuantized { raw: f64 },

    #[error("initial state has no overlap with any eigenstate")]
    DegenerateInitialState,

    #[error("states {a} and {b} have equal growth rates; jump time undefined")]
    DegenerateRate { a: usize, b: usize },

    #[error("numerical consistency check failed: {0}")]
    NumericalConsistency(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
