//! Crate-wide error type.
//!
//! Window- or cap-limited *searches* do not error: they return an
//! `Inconclusive` status in their report types, since a finite window can
//! exhaust without refuting an asymptotic statement. Errors are reserved for
//! structural misuse (mismatched descriptors, malformed input) and for
//! resource caps on computations that were explicitly requested.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("elements belong to different group descriptors")]
    DescriptorMismatch,

    #[error("invalid element for this descriptor: {0}")]
    InvalidElement(String),

    #[error("{what} cap exceeded: needed {needed}, limit {limit}")]
    CapExceeded {
        what: &'static str,
        needed: u128,
        limit: u128,
    },

    #[error("BFS radius {radius} exceeded while computing a word length")]
    RadiusExceeded { radius: u32 },

    #[error("cylinder depth too shallow: need depth > {needed}, have {have}")]
    DepthTooShallow { needed: u32, have: u32 },

    #[error("weights do not sum to 1 (probability measure required)")]
    NotAProbability,

    #[error("measure must be symmetric for this operation")]
    NotSymmetric,

    #[error("exact weight arithmetic overflowed 128-bit storage")]
    WeightOverflow,

    #[error("operation requires a {0} descriptor")]
    UnsupportedDescriptor(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("at least {min} samples required, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("quasi-harmonicity pre-check failed at g = {witness}: averaged increment {found} differs from {expected}")]
    QuasiHarmonicityViolated {
        witness: String,
        found: f64,
        expected: f64,
    },

    #[error("harmonicity violated at g = {witness} with residual {residual}")]
    HarmonicityViolated { witness: String, residual: f64 },

    #[error("no contraction certificate: tau_(eps,n) >= 1 for all n <= {cap}")]
    NoContractionCertificate { cap: u32 },

    #[error("matrix is not orthogonal within tolerance {tol}")]
    NotOrthogonal { tol: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
