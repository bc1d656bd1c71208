use thiserror::Error;

/// Crate-wide error type. Most variants are parameter-validation failures;
/// they carry enough context to be surfaced verbatim by a CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A token id fell outside the vocabulary it was used with.
    #[error("token {token} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },

    /// A symbol fed to an automaton was not part of its alphabet.
    #[error("symbol {symbol} not in alphabet of size {alphabet_size}")]
    UnknownSymbol { symbol: u32, alphabet_size: usize },

    /// An exhaustive computation was asked to visit more work than the
    /// caller-supplied or built-in budget allows.
    #[error("instance too large for exhaustive evaluation: {0}")]
    InstanceTooLarge(String),

    /// Integer overflow in an exact count.
    #[error("count overflow: {0}")]
    Overflow(String),

    /// A structural invariant of a deserialized or constructed object failed.
    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
