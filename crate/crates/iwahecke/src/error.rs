use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("division by zero in F_q")]
    DivisionByZero,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("element codes belong to different field or ring contexts: {0}")]
    ContextMismatch(String),

    #[error("precision exhausted: {op} needs digit {needed} but only {available} digits are trusted")]
    PrecisionExhausted {
        op: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("Teichmuller iteration did not stabilize within {0} steps")]
    TeichmullerNonConvergence(usize),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("matrix is not invertible at the working precision")]
    NotInvertible,

    #[error("matrix is not in the Iwahori subgroup (times center)")]
    NotInIwahori,

    #[error("vector support exceeds the requested ball: {0}")]
    SupportExceedsBall(String),

    #[error("subspace bases live in different ambient spaces ({0} vs {1})")]
    AmbientMismatch(usize, usize),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("cache i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("cache format: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
