//! Crate-wide error type.

use std::fmt;

/// Errors surfaced by the toolkit.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration or violated type invariant.
    Config(String),
    /// Tensor/matrix shape mismatch.
    Shape(String),
    /// API misuse (missing cache, empty input list, missing score, ...).
    Usage(String),
    /// Non-finite values where finite ones are required.
    Numerics(String),
    /// Degenerate input (e.g. an all-zero map cannot be normalized).
    DegenerateInput(String),
    /// Dataset / checkpoint file problems (I/O or malformed contents).
    Dataset(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Usage(m) => write!(f, "usage error: {m}"),
            Error::Numerics(m) => write!(f, "numerics error: {m}"),
            Error::DegenerateInput(m) => write!(f, "degenerate input: {m}"),
            Error::Dataset(m) => write!(f, "dataset error: {m}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Dataset(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
