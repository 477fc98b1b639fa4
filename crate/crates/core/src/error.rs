use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("quality function does not declare a k-bound")]
    NotBounded,

    #[error("AboveThreshold session already halted")]
    SessionHalted,

    #[error("session exhausted: all {tau} slicing steps used")]
    SessionExhausted { tau: usize },

    #[error("no slice stored for step {0}")]
    UnknownSlice(usize),

    #[error("slice {step} already received {limit} computation(s)")]
    SliceReuse { step: usize, limit: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{context}: needs {needed} elements, only {available} available")]
    InsufficientData {
        context: String,
        needed: usize,
        available: usize,
    },

    #[error("utility regime violated: {inequality} (n = {n}, required {required})")]
    RegimeViolation {
        n: usize,
        required: usize,
        inequality: String,
    },

    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("score table is not quasi-concave (rises again at index {0})")]
    NotQuasiConcave(usize),

    #[error("score table maximum {found} differs from n = {expected}")]
    WrongMaximum { expected: u64, found: u64 },

    #[error("labels are not consistent with any threshold")]
    NotRealizable,

    #[error("element {value} does not fit in a {bits}-bit universe")]
    OutOfRange { value: u64, bits: u32 },

    #[error("datasets are not adjacent under order map `{0}`")]
    NotAdjacent(String),

    #[error("cutoff {cutoff} is below the synchronization horizon {gamma}")]
    CutoffTooSmall { cutoff: usize, gamma: usize },

    #[error("reduction level {0} is not supported")]
    UnsupportedLevel(u32),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
