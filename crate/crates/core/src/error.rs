use thiserror::Error;

/// Errors raised by the library. Bound violations are never errors: they are
/// reported through the diagnostic structs so callers can decide what to do.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid subshift: {0}")]
    InvalidSpec(String),
    #[error("invalid depth {0}: cylinders need at least one symbol")]
    InvalidDepth(usize),
    #[error("word pair has mismatched depths {0} and {1}")]
    InvalidPair(usize, usize),
    #[error("word {0:?} is not admissible")]
    InvalidCylinder(Vec<usize>),
    #[error("transition {from} -> {to} is forbidden")]
    InadmissibleBranch { from: usize, to: usize },
    #[error("cannot coarsen a depth-1 object")]
    CannotCoarsen,
    #[error("fitted rate {0} is not a contraction")]
    NonContraction(f64),
    #[error("invalid fiber space: {0}")]
    InvalidSpace(String),
    #[error("map sends {from} to {to}, outside the fiber space")]
    RangeViolation { from: f64, to: f64 },
    #[error("invalid resolution {0}")]
    InvalidResolution(f64),
    #[error("oracle refuses {0} atoms (at most 4)")]
    OracleTooLarge(usize),
    #[error("linear program failed: {0}")]
    Solver(String),
    #[error("invalid fiber system: {0}")]
    InvalidSystem(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("need {needed} symbols but the word has {available}")]
    InsufficientSymbols { needed: usize, available: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("estimated {estimate} bytes exceeds the memory cap of {cap} bytes")]
    MemoryBound { estimate: u64, cap: u64 },
    #[error("measure is not in the zero-average subspace (integral {0})")]
    NotZeroAverage(f64),
    #[error("spec mismatch: {0}")]
    SpecMismatch(String),
    #[error("io: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
