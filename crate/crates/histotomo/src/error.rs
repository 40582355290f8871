//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by construction, I/O, and the numerical operations.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("sampler returned non-finite value at sample index {index}")]
    NonFiniteSample { index: usize },

    #[error("bad magic bytes in grid file (expected \"HTGD\")")]
    BadMagic,

    #[error("unsupported grid file version {0}")]
    BadVersion(u8),

    #[error("truncated grid file: expected {expected} more bytes")]
    Truncated { expected: usize },

    #[error("grid dimensions overflow or exceed the sanity cap ({0} values)")]
    DimOverflow(u64),

    #[error("histogram edges invalid: {0}")]
    InvalidEdges(String),

    #[error("value {value} is within {tol} of a critical value; distribution is singular there")]
    SingularValue { value: f64, tol: f64 },

    #[error("singular input: {0}")]
    SingularInput(String),

    #[error("operation requires a {expected}D grid, got {got}D")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range ({len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("moment order must be >= 1")]
    ZeroMomentOrder,

    #[error("unsupported tensor rank {0} for this operation")]
    UnsupportedRank(usize),

    #[error("ray direction is not unit length (|xi| = {0})")]
    NonUnitDirection(f64),

    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        needed: usize,
        got: usize,
        what: &'static str,
    },

    #[error("solver failed to converge: relative residual {residual} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("transverse strain matrix is not positive definite at s = {s}")]
    NotPositiveDefinite { s: f64 },

    #[error("spectrum does not span the full edge: {0}")]
    IncompleteEdge(String),

    #[error("pattern does not sample theta = {0}")]
    MissingTheta(f64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error(
        "degenerate region covers {got:.1}% of the field support (limit {limit:.1}%): \
         det K vanishes on too many voxels"
    )]
    DegenerateRegion { got: f64, limit: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
