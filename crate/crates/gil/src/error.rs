use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("derivative is singular at ({x}, {y}): |1 \u{b1} z| = {denominator:e}")]
    SingularPoint { x: f64, y: f64, denominator: f64 },

    #[error("fields are sampled on different grids")]
    GridMismatch,

    #[error("field carries no derivative arrays")]
    MissingDerivatives,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("coefficient magnitude {value:e} at index {index} is below the floor {floor:e}")]
    CoefficientBelowFloor { index: i64, value: f64, floor: f64 },

    #[error("truncation too small: tail estimate {tail:e} against head {head:e}")]
    TruncationTooSmall { tail: f64, head: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("value out of double range; natural log estimate {log_estimate}")]
    OutOfRange { log_estimate: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
