use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix parse error at line {line}: {msg}")]
    MatrixParse { line: usize, msg: String },

    #[error("symbol '{0}' is not in the substitution matrix")]
    UnknownSymbol(char),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("self-score of '{0}' is not positive")]
    NonPositiveSelfScore(String),

    #[error("FASTA error at line {line}: {msg}")]
    Fasta { line: usize, msg: String },

    #[error("character '{ch}' at position {pos} is not in the vocabulary")]
    OutOfAlphabet { ch: char, pos: usize },

    #[error("unknown unit id {0}")]
    UnknownUnit(u32),

    #[error("vocabulary invariant violated by unit {id}: {rule}")]
    VocabInvariant { id: u32, rule: String },

    #[error("vocabulary format error at line {line}: {msg}")]
    VocabFormat { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path} line {line}: {msg}")]
    Table { path: String, line: usize, msg: String },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Whether the error came from the filesystem rather than from bad input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// An I/O error whose message names the file involved.
    pub fn io_at(path: &std::path::Path, e: io::Error) -> Self {
        Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }
}

/// Reads a whole file, naming it in any error.
pub fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))
}
