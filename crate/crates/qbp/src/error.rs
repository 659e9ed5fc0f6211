use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QbpError {
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("labels {0:?} are not a subset of the operator support")]
    LabelNotSubset(Vec<String>),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("operator has eigenvalue {value:.3e} below the positivity cutoff")]
    NegativeEigenvalue { value: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("label sets overlap on {0:?}")]
    OverlappingSets(Vec<String>),
    #[error("state is not normalized (trace {0})")]
    NotNormalized(f64),
    #[error("operators do not commute (commutator norm {0:.3e})")]
    NotCommuting(f64),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("{count} vertices exceed the subset enumeration cap of {cap}; coarse-grain first")]
    TooManyVertices { count: usize, cap: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("state is not strictly positive (min eigenvalue {0:.3e})")]
    NotStrictlyPositive(f64),
    #[error("graph is not a tree")]
    NotATree,
    #[error("graph is not a chain")]
    NotAChain,
    #[error("state is not Markov on the graph (max cmi {0:.3e})")]
    NotMarkov(f64),
    #[error("directed graph has a cycle; no ancestral ordering")]
    NoAncestralOrdering,
    #[error("total dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error("operation requires order {expected}, network has order {found}")]
    OrderMismatch { expected: String, found: String },
    #[error("normalization underflow (trace {0:.3e})")]
    Underflow(f64),
    #[error("measurement outcome has probability {0:.3e}")]
    ZeroProbability(f64),
    #[error("inconsistent block specification: {0}")]
    InconsistentBlocks(String),
    #[error("potential tables must be strictly positive")]
    NonPositivePsi(String),
    #[error("MPS tensor at site {0} is zero")]
    ZeroTensor(usize),
    #[error("edge terms `{0}` and `{1}` give non-commuting edge operators")]
    NonCommutingEdgeTerms(String, String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, QbpError>;
