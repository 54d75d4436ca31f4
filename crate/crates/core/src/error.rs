use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid shape {n1}x{n2}: {reason}")]
    DegenerateShape { n1: usize, n2: usize, reason: &'static str },

    #[error("{cells} cells exceed the dense covariance threshold of {threshold}")]
    ThresholdExceeded { cells: usize, threshold: usize },

    #[error("covariance matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("circulant embedding has negative spectral mass {relative_mass:e} above tolerance")]
    EmbeddingNotPsd { relative_mass: f64 },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },

    #[error("order statistic rank {r} outside 1..={d}")]
    InvalidRank { d: usize, r: usize },

    #[error("field kind mismatch: expected {expected}, got {found}")]
    KindMismatch { expected: &'static str, found: String },

    #[error("lambda {0} outside [0, 1]")]
    LambdaOutOfRange(f64),

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("cell count {0} too small; need at least 3")]
    DegenerateSize(f64),

    #[error("exceedance target {target} must lie in (0, {cells})")]
    TargetOutOfRange { target: f64, cells: f64 },

    #[error("invalid targets kappa = {kappa}, tau = {tau}: need kappa >= tau > 0")]
    InvalidTargets { kappa: f64, tau: f64 },

    #[error("order violation: {0}")]
    OrderViolation(String),

    #[error("correlation {0} outside (-1, 1)")]
    CorrelationOutOfRange(f64),

    #[error("tail probability {0} outside (0, 1)")]
    DegenerateTail(f64),

    #[error("inner shape {inner} must have fewer cells than outer shape {outer}")]
    InvalidNesting { inner: String, outer: String },

    #[error("shape {n1}x{n2} has aspect ratio above the bound {bound}")]
    RatioBound { n1: usize, n2: usize, bound: f64 },

    #[error("replications must be at least {min}, got {got}")]
    TooFewReplications { min: u64, got: u64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Stable machine-readable name, used in error JSON and FFI status mapping.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DegenerateShape { .. } => "DegenerateShape",
            Error::ThresholdExceeded { .. } => "ThresholdExceeded",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::EmbeddingNotPsd { .. } => "EmbeddingNotPSD",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::InvalidRank { .. } => "InvalidRank",
            Error::KindMismatch { .. } => "KindMismatch",
            Error::LambdaOutOfRange(_) => "LambdaOutOfRange",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::DegenerateSize(_) => "DegenerateSize",
            Error::TargetOutOfRange { .. } => "TargetOutOfRange",
            Error::InvalidTargets { .. } => "InvalidTargets",
            Error::OrderViolation(_) => "OrderViolation",
            Error::CorrelationOutOfRange(_) => "CorrelationOutOfRange",
            Error::DegenerateTail(_) => "DegenerateTail",
            Error::InvalidNesting { .. } => "InvalidNesting",
            Error::RatioBound { .. } => "RatioBound",
            Error::TooFewReplications { .. } => "TooFewReplications",
            Error::Parse { .. } => "ParseError",
            Error::UnknownKey { .. } => "UnknownKey",
            Error::InvalidValue { .. } => "InvalidValue",
            Error::Io(_) => "IoError",
        }
    }
}
