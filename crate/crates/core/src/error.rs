use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic in flow file: got {0}")]
    BadMagic(f32),
    #[error("truncated flow file: expected {expected} payload floats, got {got}")]
    TruncatedFile { expected: usize, got: usize },
    #[error("flow dimensions out of range: {width}x{height}")]
    DimensionOverflow { width: i64, height: i64 },
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("non-finite value in {0}")]
    NonFiniteValue(String),
    #[error("too few frames: found {0}, need at least 2")]
    TooFewFrames(usize),
    #[error("mixed dimensions: {0}x{1} vs {2}x{3}")]
    MixedDimensions(usize, usize, usize, usize),
    #[error("failed to decode {path}: {reason}")]
    DecodeFailure { path: String, reason: String },
    #[error("invalid gamma {0}: must be > 0")]
    InvalidGamma(f64),
    #[error("empty flow stream")]
    EmptyStream,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no selection record for clip {0}")]
    MissingSelection(String),
    #[error("label {0} not among the model classes")]
    UnknownLabel(usize),
    #[error("actor does not fit the frame: {0}")]
    ActorExceedsFrame(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed manifest or model file: {0}")]
    Malformed(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Malformed(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
