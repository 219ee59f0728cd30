use thiserror::Error;

/// Everything that can go wrong while building, evaluating or sampling a law.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {what}")]
    IndexOutOfRange { what: String },
    #[error("dimension {dim} exceeds the supported maximum of {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("parameter for subset {mask} is {value}, outside [0, 1]")]
    RangeViolation { mask: u32, value: f64 },
    #[error("component {component} is never hit: its survival parameter equals 1")]
    DegenerateComponent { component: usize },
    #[error("missing parameter for subset {mask}")]
    MissingKey { mask: u32 },
    #[error("unexpected key {key}")]
    UnexpectedKey { key: String },
    #[error("parameters sum to {sum}, expected 1")]
    SumNotOne { sum: f64 },
    #[error("not representable: {reason}")]
    NotRepresentable { reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("the kept index set is empty")]
    EmptyKeep,
    #[error("invalid sequence: {reason}")]
    InvalidSequence { reason: String },
    #[error("sequence too short: need at least {min} entries, got {len}")]
    TooShort { min: usize, len: usize },
    #[error("entry {index} is {value}, expected a strictly positive value")]
    NonPositiveEntry { index: usize, value: f64 },
    #[error("{what} = {value} is out of range")]
    OutOfRange { what: String, value: f64 },
    #[error("increment law is concentrated at zero")]
    DegenerateAtZero,
    #[error("mixing law is concentrated at one")]
    MixingDegenerateAtOne,
    #[error("correlation of a component with itself requested via index {index}")]
    IndexEqual { index: usize },
    #[error("not a survival function: {reason}")]
    NotASurvival { reason: String },
    #[error("problem too large: {reason}")]
    TooLarge { reason: String },
    #[error("sample batch is empty")]
    EmptyBatch,
    #[error("grid shapes differ: {reason}")]
    ShapeMismatch { reason: String },
    #[error("unknown model {name}")]
    UnknownModel { name: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::IndexOutOfRange { .. } => "index-out-of-range",
            Error::DimensionTooLarge { .. } => "dimension-too-large",
            Error::RangeViolation { .. } => "range-violation",
            Error::DegenerateComponent { .. } => "degenerate-component",
            Error::MissingKey { .. } => "missing-key",
            Error::UnexpectedKey { .. } => "unexpected-key",
            Error::SumNotOne { .. } => "sum-not-one",
            Error::NotRepresentable { .. } => "not-representable",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::EmptyKeep => "empty-keep",
            Error::InvalidSequence { .. } => "invalid-sequence",
            Error::TooShort { .. } => "too-short",
            Error::NonPositiveEntry { .. } => "nonpositive-entry",
            Error::OutOfRange { .. } => "out-of-range",
            Error::DegenerateAtZero => "degenerate-at-zero",
            Error::MixingDegenerateAtOne => "mixing-degenerate-at-one",
            Error::IndexEqual { .. } => "index-equal",
            Error::NotASurvival { .. } => "not-a-survival",
            Error::TooLarge { .. } => "too-large",
            Error::EmptyBatch => "empty-batch",
            Error::ShapeMismatch { .. } => "shape-mismatch",
            Error::UnknownModel { .. } => "unknown-model",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        3
    }
}
