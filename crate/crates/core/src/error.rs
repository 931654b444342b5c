use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex {idx} is out of range for a field of {len} vertices")]
    InvalidVertex { idx: usize, len: usize },
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("non-finite value at vertex {idx}")]
    NonFinite { idx: usize },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("corrupt stream: {0}")]
    Corrupt(String),
    #[error("field dimensions differ: {left:?} vs {right:?}")]
    DimMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("error bound violated at vertex {vertex}: |f - g| = {error:e} > {bound:e}")]
    BoundViolated {
        vertex: usize,
        error: f64,
        bound: f64,
    },
    #[error("edit log does not fit the field: {0}")]
    EditCorruption(String),
    #[error("no convergence after {iterations} edit rounds (bound {bound})")]
    NonConvergence { iterations: usize, bound: usize },
    #[error(
        "vertex {target} is clamped to its lower bound but still ordered above {witness}; \
         the violation cannot be resolved by decreasing edits"
    )]
    Escalation { target: usize, witness: usize },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("graph contains a cycle")]
    Cycle,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
