use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed tag file header: {0}")]
    MalformedHeader(String),

    #[error("truncated tag record {index} (expected {expected} records)")]
    TruncatedRecord { index: u64, expected: u64 },

    #[error("invalid tag stream: {0}")]
    InvalidStream(#[from] crate::tags::StreamViolation),

    #[error("matrix contains no counts")]
    EmptyData,

    #[error("subspace of size {d} at offset {offset} does not fit a {d_a}x{d_b} matrix")]
    OutOfRange {
        d: usize,
        offset: usize,
        d_a: usize,
        d_b: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("malformed matrix file: {0}")]
    MalformedMatrix(String),

    #[error("correlogram has no peak above baseline")]
    NoPeak,

    #[error("correlogram peak is not contained in the histogram range")]
    PeakUnresolved,

    #[error("matrix diagonal is empty")]
    ZeroDiagonal,

    #[error("dimension {0} is not prime (pass allow_nonprime to compute a non-rigorous certificate)")]
    NonPrimeDimension(usize),

    #[error("impossible value: {0}")]
    ImpossibleValue(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("all {0} bootstrap resamples failed")]
    BootstrapFailed(usize),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Name of the pipeline stage the error was raised in, if any.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}
