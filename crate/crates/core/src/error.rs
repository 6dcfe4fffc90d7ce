use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid interval [{lo}, {hi})")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("decay factor must lie in (0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cost function has no pieces left above the floor")]
    EmptyFunction,
    #[error("trace is empty")]
    EmptyTrace,
    #[error("trace contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("trace of length {len} exceeds the exhaustive oracle limit of {max}")]
    TooLarge { len: usize, max: usize },
    #[error("{0}")]
    Unsupported(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// `std::io::Error` is neither `Clone` nor `PartialEq`; keep the rendered message.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct IoError(pub String);

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(IoError(e.to_string()))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
