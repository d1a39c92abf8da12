use thiserror::Error;

use crate::kernels::KernelFamily;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix of size {dim} is not positive definite (jitter schedule exhausted)")]
    NotPositiveDefinite { dim: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sequence too short: need more than {needed} samples, got {found}")]
    SequenceTooShort { needed: usize, found: usize },

    #[error("lag spec needs inputs but the records carry none (record {index})")]
    MissingInput { index: usize },

    #[error("insufficient history: need {needed} {what}, got {found}")]
    InsufficientHistory {
        what: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("kernel family {0} has no finite state-space representation")]
    UnsupportedKernel(KernelFamily),

    #[error("duplicate observation time {0}")]
    DuplicateTimes(f64),

    #[error("invalid basis domain: {0}")]
    InvalidDomain(String),

    #[error("state {value} in dimension {dim} is outside the basis domain [{lower}, {upper}]")]
    StateOutsideDomain {
        dim: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("all particle weights vanished at step {step}")]
    DegenerateWeights { step: usize },

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("hyperparameter optimization failed: {0}")]
    OptimizationFailed(String),
}

impl Error {
    /// True for failures caused by the numbers rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::Singular
                | Error::DegenerateWeights { .. }
                | Error::InternalConsistency(_)
                | Error::OptimizationFailed(_)
        )
    }
}
