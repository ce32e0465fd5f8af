use thiserror::Error;

/// Errors raised by the algebra, simulation, pricing and calibration layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("alphabet mismatch: {left} vs {right}")]
    AlphabetMismatch { left: usize, right: usize },

    #[error("letter {letter} outside alphabet 1..={d}")]
    LetterOutOfRange { letter: usize, d: usize },

    #[error("alphabet size must be in 1..=255, got {0}")]
    InvalidAlphabet(usize),

    #[error("half-shuffle integrator has a non-zero empty-word coefficient ({0})")]
    ConstantIntegrator(f64),

    #[error("exponential requires a zero empty-word coefficient, got {0}")]
    NonzeroConstantTerm(f64),

    #[error("duplicate word {0} in functional")]
    DuplicateWord(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid signature: {0}")]
    InvalidSignature(String),

    #[error("word of length {len} exceeds the decomposition cap {cap}")]
    WordTooLong { len: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("algebra order {algebra_order} cannot hold terms of length {needed}")]
    AlgebraOrderTooSmall { algebra_order: usize, needed: usize },

    #[error("invalid instrument: {0}")]
    InvalidInstrument(String),

    #[error("rank-deficient design ({rank} of {features} features); set a positive ridge")]
    RankDeficient { rank: usize, features: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("all {0} calibration starts diverged")]
    AllStartsDiverged(usize),

    #[error("io: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
