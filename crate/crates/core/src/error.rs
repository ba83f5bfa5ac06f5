use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("point outside the unit box at coordinate {index}: {value}")]
    OutsideBox { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate label `{0}` in reference table")]
    DuplicateLabel(String),

    #[error("no bistability at end of anneal: pump {pump} <= 1 + measurement strength {measurement}")]
    NoBistability { pump: f64, measurement: f64 },

    #[error("non-finite gradient at roundtrip {roundtrip}")]
    NonFiniteGradient { roundtrip: usize },

    #[error("reference objective is zero; gap undefined")]
    ZeroReference,

    #[error("instance `{0}` has no reference objective")]
    MissingReference(String),

    #[error("grid of {points}^{n} points exceeds the evaluation budget")]
    GridBudget { points: usize, n: usize },

    #[error("{0}")]
    Metric(String),
}
