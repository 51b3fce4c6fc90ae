use thiserror::Error;

use crate::crm::ItemId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown item id {0}")]
    UnknownItem(ItemId),

    #[error("invalid ranking: {0}")]
    InvalidRanking(String),

    #[error("zero denominator at position {position}: ranked items exhaust the measure")]
    ZeroDenominator { position: usize },

    #[error("nonpositive rate {rate} for ranking {ranking} position {position}")]
    NonPositiveRate {
        ranking: usize,
        position: usize,
        rate: f64,
    },

    #[error("the race selected the residual mass but fresh items are not allowed here")]
    ResidualSelected,

    #[error("state does not match the dataset: {0}")]
    StateMismatch(String),

    #[error("line {line}: {message}")]
    Input { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("corrupt trace at line {line}: {message}")]
    CorruptTrace { line: usize, message: String },

    #[error("trace contains no snapshots")]
    EmptyTrace,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status: 2 for bad input, 3 for bad configuration, 4 for
    /// I/O failures and 1 for anything raised while sampling.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input { .. } | Error::InvalidRanking(_) | Error::UnknownItem(_) => 2,
            Error::CorruptTrace { .. } | Error::EmptyTrace => 2,
            Error::Config(_) | Error::InvalidParameter(_) => 3,
            Error::Io(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
