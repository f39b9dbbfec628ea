use thiserror::Error;

pub type Result<T> = std::result::Result<T, AbvError>;

#[derive(Debug, Error)]
pub enum AbvError {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{0}")]
    InvalidOperator(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("grid too small: need at least 2 cells per axis, got {0:?}")]
    GridTooSmall(Vec<usize>),

    #[error("{0}")]
    InvalidInput(String),

    #[error("ball (center {center:?}, radius {radius}) not contained in grid domain")]
    BallOutsideDomain { center: Vec<f64>, radius: f64 },

    #[error("reflected ball placement failed for ball at {center:?} (scale 2^-{level}): {reason}")]
    ReflectedBall {
        center: Vec<f64>,
        level: i32,
        reason: String,
    },

    #[error("numeric inconsistency: {0}")]
    Inconsistency(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("trace did not converge: last L1 difference {last_diff:.3e} above tolerance {tol:.3e}")]
    TraceNotConverged { last_diff: f64, tol: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl AbvError {
    /// Exit code contract: 2 usage/parse, 3 numeric inconsistency, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            AbvError::Parse { .. } | AbvError::InvalidInput(_) => 2,
            AbvError::Inconsistency(_) => 3,
            _ => 1,
        }
    }
}
