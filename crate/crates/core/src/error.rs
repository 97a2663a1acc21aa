use thiserror::Error;

use crate::kernels::{KernelFamily, KernelLevel};

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid bandwidth: {0}")]
    InvalidBandwidth(f64),

    #[error("{family:?} {level:?} kernel is singular at coincident points")]
    SingularKernel {
        family: KernelFamily,
        level: KernelLevel,
    },

    #[error("no closed form for {transform} of a {level:?}-level kernel")]
    InvalidTransform {
        transform: &'static str,
        level: KernelLevel,
    },

    #[error("field requires a base-level kernel, got {0:?}")]
    NotBaseLevel(KernelLevel),

    #[error("empty particle set")]
    EmptySet,

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("exclusion index {index} invalid for a set of {len} particles")]
    InvalidExclusion { index: usize, len: usize },

    #[error("exclusion requires uniform weights")]
    ExclusionWithWeights,

    #[error("all kernel terms vanish (log-sum-exp of -inf)")]
    DegenerateLogSumExp,

    #[error("set sizes must match: {pos} positive vs {neg} negative particles")]
    UnequalSetSizes { pos: usize, neg: usize },

    #[error("invalid finite-difference step: {0}")]
    InvalidStep(f64),

    #[error("empty grid")]
    EmptyGrid,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("transport diverged at iteration {iteration}: mean particle norm {mean_norm:e}")]
    Diverged { iteration: usize, mean_norm: f64 },

    #[error("csv: {0}")]
    Csv(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(a, b));
    }
    Ok(())
}
