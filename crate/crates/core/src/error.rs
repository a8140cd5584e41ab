use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series is empty")]
    EmptySeries,

    #[error("series has no valid samples")]
    NoValidSamples,

    #[error("window of {window_s} s is invalid for a series of {span_s} s sampled every {gate} s")]
    BadWindow { window_s: f64, span_s: f64, gate: f64 },

    #[error("timebases differ: {0}")]
    TimebaseMismatch(String),

    #[error("index {index} out of range for a series of {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
