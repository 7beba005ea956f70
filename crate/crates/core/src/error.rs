use std::path::PathBuf;

use crate::pnm::PnmError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("channel {channel} out of range (image has {channels})")]
    ChannelOutOfRange { channel: usize, channels: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("vector length {found} does not match grid size {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("reference has zero RMS")]
    ZeroReference,

    #[error("positivity offset must be > 0, got {0}")]
    InvalidOffset(f64),

    #[error("reference image must be strictly positive (value {value} at index {index})")]
    NonPositive { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("forward Euler step τ = {tau} violates the stability bound τ < 1/max|a_ii| = {bound}")]
    ForwardEulerBound { tau: f64, bound: f64 },

    #[error("factor shift {found} does not match the shift {expected} this scheme requires")]
    ShiftMismatch { expected: f64, found: f64 },

    #[error("zero or non-finite pivot {pivot} at row {row} during tridiagonal factorization")]
    SingularPivot { row: usize, pivot: f64 },

    #[error("BiCGStab breakdown after {iterations} iterations (relative residual {residual:e})")]
    KrylovBreakdown { iterations: usize, residual: f64 },

    #[error(
        "BiCGStab did not converge in {iterations} iterations (relative residual {residual:e})"
    )]
    KrylovNotConverged { iterations: usize, residual: f64 },

    #[error("channel {channel}, step {step}: {source}")]
    Step {
        channel: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value in channel {channel} at step {step}")]
    NonFinite { channel: usize, step: usize },

    #[error("dense oracle limited to {cap} unknowns, got {size}")]
    OracleCap { size: usize, cap: usize },

    #[error("banded LU limited to {cap} stored entries, problem needs {needed}")]
    BandedCap { needed: usize, cap: usize },

    #[error(transparent)]
    Pnm(#[from] PnmError),

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
