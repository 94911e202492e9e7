use thiserror::Error;

/// Errors surfaced by the library.
///
/// `Undecided` and `Refused` are not bugs: they report that a numerical
/// certificate could not be produced within the configured budget, or that
/// the inputs do not satisfy an operation's precondition.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of representable range: {0}")]
    Range(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("undecided: {0}")]
    Undecided(String),

    #[error("enumeration cap exceeded: support size {size:e} > cap {cap:e}")]
    CapExceeded { size: f64, cap: f64 },

    #[error("bisection bracket failure: {0}")]
    Bracket(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
