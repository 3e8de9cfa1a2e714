use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("cannot parameterize {family} demand: {reason}")]
    Parameterization { family: &'static str, reason: String },

    #[error("state space too large: {states} states exceeds limit {limit}")]
    StateSpaceTooLarge { states: usize, limit: usize },

    #[error("optimality gap undefined: lower bound is zero")]
    GapUndefined,

    #[error("unknown policy family `{0}`")]
    UnknownFamily(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Validation(msg()))
    }
}
