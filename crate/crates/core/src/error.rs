use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector was used with a measure it was not built on.
    #[error("measure alignment: {0}")]
    Alignment(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parameter outside domain: {0}")]
    Domain(String),
    /// The metric tensor g dropped below the degeneracy floor.
    #[error("degenerate dictionary: {0}")]
    Degenerate(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("ill-conditioned linear system: {0}")]
    Conditioning(String),
    #[error("iteration budget exhausted: {0}")]
    Iteration(String),
    #[error("search range: {0}")]
    Range(String),
    #[error("noise model: {0}")]
    Model(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
