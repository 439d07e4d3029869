use thiserror::Error;

/// Errors produced by grid construction, transforms and frame analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("shift out of box: {0}")]
    ShiftOutOfBox(String),

    #[error("zero function: {0}")]
    ZeroFunction(String),

    #[error("not a frame: {0}")]
    NotAFrame(String),

    #[error("membership failure: {0}")]
    MembershipFailure(String),

    #[error("operator is not twisted shift preserving: {0}")]
    NotTsp(String),

    #[error("basis is not a Parseval fiber basis: {0}")]
    BasisNotParseval(String),

    #[error("fiber field is not self-adjoint: {0}")]
    NotSelfAdjoint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
