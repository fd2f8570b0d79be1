//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A pivot fell below tolerance. For clock matrices this signals that
    /// the clock left the validity region (K_t no longer invertible).
    #[error("singular matrix: pivot below tolerance")]
    SingularMatrix,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("unsupported GIG index q={q}; only half-integer cases are implemented")]
    UnsupportedIndex { q: f64 },

    #[error("unsupported dimension n={n}; this operation is implemented for n <= {max}")]
    UnsupportedDimension { n: usize, max: usize },

    #[error("simulation horizon exceeded at t={horizon}; retry with a longer horizon cap")]
    HorizonExceeded { horizon: f64 },

    #[error("degenerate Lamperti clock: {0}")]
    DegenerateClock(String),

    #[error("clock overran its limit on coordinate {coord} at u={u}; du too coarse")]
    ClockOverrun { coord: usize, u: f64 },

    #[error("numeric overflow: {0}")]
    Overflow(String),

    #[error("conditioning window captured {hits} replicas, below the floor {needed}")]
    InsufficientHits { hits: usize, needed: usize },

    #[error("too few samples: {n} < {min}")]
    TooFewSamples { n: usize, min: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
