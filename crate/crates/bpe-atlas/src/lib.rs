//! Numerical toolkit for bounded point evaluations of left-invertible
//! weighted shifts on rooted directed graphs.
//!
//! The operators studied here act on `l^2(V)` for a countable vertex set `V`
//! equipped with a parent function `phi`: the shift maps a basis vector `e_v`
//! to the weighted sum of basis vectors over the fiber `phi^{-1}(v)`. Three
//! built-in families are provided (a loop-at-root chain with dyadic weight
//! bands, a rooted tree with one distinguished branch, and the classical
//! unilateral weighted shift), plus custom parent arrays.
//!
//! The crate computes, in overflow-safe log2 arithmetic:
//!
//! - the Cauchy dual shift and the wandering subspace `ker T*`,
//! - orbit norms, operator norms, spectral and local spectral radii, and the
//!   two disc radii bounding the region of bounded point evaluations,
//! - the finite-section quantities `B_n(w)` whose boundedness in `n`
//!   characterizes bounded point evaluations, with region scans and
//!   bounded/unbounded classification,
//! - truncated evaluation maps, reproducing kernel Gram matrices, and the
//!   adjoint eigenvector cross-Gram test,
//! - verification tables reproducing the numeric targets of the two
//!   built-in example families.
//!
//! The `bpe-atlas` binary exposes all of this behind a JSON config and
//! subcommands; see the README for the schema and output formats.

use std::fmt;

pub mod bpe;
pub mod config;
pub mod graph;
pub mod operator;
pub mod report;
pub mod spectral;
pub mod vector;

/// Complex double, the scalar type of every Hilbert-space computation here.
pub type C64 = num_complex::Complex<f64>;

/// Crate-wide error type.
///
/// `InvalidArgument` and `Config` indicate caller mistakes (CLI exit 1);
/// everything else is a compute-time failure (CLI exit 2).
#[derive(Debug)]
pub enum Error {
    /// A constructor or operation was called with out-of-contract inputs.
    InvalidArgument(String),
    /// A computation needs vertices beyond the materialized depth. The graph
    /// must be rebuilt with a larger depth; results are never silently
    /// truncated.
    HorizonExceeded { needed: usize, depth: usize, what: String },
    /// An estimator was asked to work with fewer data points than it needs.
    HorizonTooSmall(String),
    /// The weight data does not certify `inf_v d_v > 0`, so the Cauchy dual
    /// does not exist as a bounded operator.
    NotLeftInvertible(String),
    /// Branching data would make `ker T*` infinite-dimensional (or larger
    /// than the supported cap).
    InfiniteDimensionalKernel(String),
    /// The requested series needs a loop edge at the root and the graph has
    /// none.
    NoLoopAtRoot,
    /// Strict mode: an evaluation-series truncation has no convergence
    /// certificate at the requested point.
    DivergentSeries(String),
    /// A cross-Gram test received spaces of different dimensions.
    DimensionMismatch { expected: usize, got: usize, what: String },
    /// Weight-product or vertex indices outside the materialized range.
    OutOfRange(String),
    /// A verification table has failing rows, or a strict-mode scan produced
    /// inconclusive classifications.
    CheckFailed(String),
    /// Config parse or validation failure.
    Config(String),
    /// Filesystem failure while emitting reports.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::HorizonExceeded { needed, depth, what } => write!(
                f,
                "horizon exceeded: {what} needs depth >= {needed} but the graph \
                 is materialized to depth {depth}; rebuild with a larger depth"
            ),
            Error::HorizonTooSmall(msg) => write!(f, "horizon too small: {msg}"),
            Error::NotLeftInvertible(msg) => write!(f, "not left-invertible: {msg}"),
            Error::InfiniteDimensionalKernel(msg) => {
                write!(f, "kernel dimension not certified finite: {msg}")
            }
            Error::NoLoopAtRoot => {
                write!(f, "the root has no loop edge, so the loop-ratio series is undefined")
            }
            Error::DivergentSeries(msg) => write!(f, "divergent series: {msg}"),
            Error::DimensionMismatch { expected, got, what } => {
                write!(f, "dimension mismatch in {what}: expected {expected}, got {got}")
            }
            Error::OutOfRange(msg) => write!(f, "index out of range: {msg}"),
            Error::CheckFailed(msg) => write!(f, "check failed: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI maps this error to: 1 for config/usage
    /// problems, 2 for compute failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 1,
            _ => 2,
        }
    }
}
