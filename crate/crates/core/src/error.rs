use thiserror::Error;

/// Crate-wide error type.
///
/// `Config` covers anything wrong with shapes, schemas or run settings
/// detected before numbers start flowing; `Numerical` covers NaN/Inf and
/// divergence encountered while they do.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("infinite divergence: q has support where p is zero (smooth p first)")]
    InfiniteDivergence,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
