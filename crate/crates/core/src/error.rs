use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("non-finite input value {0}")]
    NonFiniteInput(f64),
    #[error("teacher series too short: length {length}, washout {washout}")]
    TeacherTooShort { length: usize, washout: usize },
    #[error("target series is constant, NMSE undefined")]
    ConstantTarget,
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series too short for analysis: {length} < {required}")]
    SeriesTooShort { length: usize, required: usize },
    #[error("no dominant frequency in an all-zero series")]
    NoDominantFrequency,
    #[error("invalid task parameter: {0}")]
    Task(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
