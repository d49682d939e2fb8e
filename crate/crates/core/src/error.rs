use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("outside domain: {0}")]
    Domain(String),
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("barrier construction failed: {0}")]
    Barrier(String),
    #[error("fit rejected: {0}")]
    Fit(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
