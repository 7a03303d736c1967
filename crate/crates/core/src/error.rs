use thiserror::Error;

use crate::bits::Bits;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bit string {input:?}: unexpected character {found:?}")]
    InvalidBits { input: String, found: char },

    #[error("invalid machine config: {0}")]
    InvalidMachineConfig(String),

    #[error("enumeration produced more than {limit} records")]
    RecordCeiling { limit: usize },

    #[error("cache was written by machine {found:?}, expected {expected:?}")]
    VersionMismatch { expected: String, found: String },

    #[error("corrupt cache: {0}")]
    CacheCorrupt(String),

    #[error("cache does not match the request: {0}")]
    CacheMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no program for {subject} found within the caps")]
    UnsupportedSubject { subject: String },

    #[error("width mismatch: expected {expected} bits, got {found}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("zero evidence for mind-state {0:?}")]
    ZeroEvidence(Bits),

    #[error("zero denominator: {0}")]
    ZeroDenominator(String),

    #[error("zero weight: {0}")]
    ZeroWeight(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate result: {0}")]
    Degenerate(String),

    #[error("config error at {path} (line {line}, column {column}): {message}")]
    ConfigSchema {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
