use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("regularized scatter matrix is not positive definite (ridge {ridge:e} too small)")]
    NotPositiveDefinite { ridge: f64 },

    #[error("requested rank {requested} exceeds available rank {available}")]
    RankExceeded { requested: usize, available: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("image too small: {0}")]
    ImageTooSmall(String),

    #[error("tracking failed: {0}")]
    Tracking(String),

    #[error("zero denominator: {0}")]
    ZeroDenominator(&'static str),

    #[error("no positive sequences for AU {0}")]
    NoPositives(u16),

    #[error("missing attribute AU {0}")]
    MissingAttribute(u16),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported container version {0}")]
    Version(u32),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
