use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, VekuaError>;

/// A symbol-expression syntax error, positioned by character offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at char {}: {}", self.pos, self.msg)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Error)]
pub enum VekuaError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("symbol parse error {0}")]
    Parse(#[from] ParseError),
    #[error("symbol undefined at rep {0}")]
    SymbolUndefined(String),
    #[error("group mismatch: {0}")]
    GroupMismatch(String),
    #[error("inadmissible at singular mode(s): {}", .0.join("; "))]
    Inadmissible(Vec<String>),
    #[error("hypothesis {which}) violated at mode {mode}")]
    Hypothesis { which: char, mode: String },
    #[error("boundary denominator vanishes at mode {0}")]
    BoundaryDenominator(String),
    #[error("mode failures: {}", .0.join("; "))]
    ModeFailures(Vec<String>),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
