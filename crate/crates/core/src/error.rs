use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("need at least 2 candidates, archive has {0}")]
    InsufficientCandidates(usize),

    #[error("environment error at step {step}: {message}")]
    Environment { step: usize, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid session transition: {0}")]
    State(String),

    #[error("query {0} has already been answered")]
    QueryAnswered(u64),

    #[error("no query with id {0}")]
    UnknownQuery(u64),

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
