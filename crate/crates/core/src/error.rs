use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({0}) lies outside [0,1)")]
    PointOutOfRange(f64),
    #[error("dyadic position {position} out of range for level {level}")]
    BadPosition { level: u32, position: u64 },
    #[error("depth {0} exceeds the supported maximum")]
    DepthTooLarge(u32),
    #[error("exponent {0} must be finite and at least 1")]
    BadExponent(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("infeasible constraints: {0}")]
    Infeasible(String),
    #[error("schedule violation: {0}")]
    Schedule(String),
    #[error("numerically singular: {0}")]
    Singular(String),
    #[error("game aborted at turn {turn}: {reason}")]
    GameAborted { turn: usize, reason: String },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
