//! Numerical toolkit for linear barycentric coding of probability measures.
//!
//! The crate provides discrete measures and transport maps ([`measures`]),
//! entropic optimal transport in the log domain ([`eot`]), exact optimal
//! transport ([`exact_ot`]), simplex-constrained quadratic programs
//! ([`simplex_opt`]), analysis and synthesis in the linear barycentric coding
//! model ([`lbcm`]) and its Wasserstein-barycenter counterpart ([`w2bcm`]),
//! closed-form Gaussian machinery on the Bures-Wasserstein geometry
//! ([`gaussian_bw`]), one- and two-dimensional representational-capacity
//! constructions ([`capacity`]), and an imaging pipeline that moves between
//! grayscale rasters and point clouds ([`imaging`]).

pub mod capacity;
pub mod eot;
pub mod exact_ot;
pub mod gaussian_bw;
pub mod imaging;
pub mod lbcm;
pub mod measures;
pub mod sampling;
pub mod simplex_opt;
pub mod w2bcm;

pub(crate) mod numeric;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch in {context}: {left} vs {right}")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("negative weight at index {index}: {value}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights sum to {sum:e}, too far from 1 to renormalize")]
    NotNormalized { sum: f64 },
    #[error("support points mix dimensions {0} and {1}")]
    MixedDimension(usize, usize),
    #[error("incompatible base sample: maps must share identical base points")]
    IncompatibleBaseSample,
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(
        "marginal violation {violation:e} still above tol {tol:e} after {iterations} iterations"
    )]
    NotConverged {
        violation: f64,
        iterations: usize,
        tol: f64,
    },
    #[error("numerically degenerate entropic map at query point")]
    DegenerateMap,
    #[error(
        "support product {product} exceeds exact-solver budget {budget}; use the entropic backend"
    )]
    BudgetExceeded { product: usize, budget: usize },
    #[error("unmatched source atom {0}: transport-plan row has zero mass")]
    UnmatchedSourceAtom(usize),
    #[error("matrix not PSD within tolerance: min eigenvalue {min_eig:e} with norm {norm:e}")]
    NotPsd { min_eig: f64, norm: f64 },
    #[error("matrix not symmetric within tolerance")]
    NotSymmetric,
    #[error("covariance not positive definite")]
    NotPositiveDefinite,
    #[error("quadratic program not certified: gap {gap:e} above tol {tol:e}")]
    QpNotCertified { gap: f64, tol: f64 },
    #[error("non-finite loss at lambda {lambda:?}")]
    NonFiniteLoss { lambda: Vec<f64> },
    #[error("empty image: no positive pixel")]
    EmptyImage,
    #[error("occlusion block out of image bounds")]
    BlockOutOfBounds,
    #[error("lower bound too aggressive: thresholded raster has zero mass")]
    LowerBoundTooAggressive,
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
