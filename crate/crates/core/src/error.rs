use thiserror::Error;

use crate::tournament::PhaseReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// The first level produced an empty winner set, so no prefix intersection exists.
    #[error("no winner: level-1 champions set is empty ({} level reports)", .reports.len())]
    NoWinner { reports: Vec<PhaseReport> },

    /// The experiment configuration could not be parsed or is inconsistent.
    #[error("malformed config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
