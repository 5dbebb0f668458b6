//! Exact and statistical computations for random walks on countable groups.
//!
//! The crate works with two concrete families of groups: free groups `F_r`
//! (reduced words over `r` generator pairs) and integer lattices `Z^d`.
//! On top of these it provides
//!
//! * exact convolution algebra for finitely supported rational measures,
//!   with drift, entropy and volume-growth reports ([`measure`]);
//! * an exact model of the tree boundary of `F_r` under the simple random
//!   walk: cylinder measures, the boundary action, the Radon-Nikodym
//!   cocycle and its closed form, the Poisson transform ([`boundary`]);
//! * the Besov-space contraction theory for the convolution operator on
//!   boundary functions, and a Neumann-series solver for the cohomological
//!   equation ([`besov`]);
//! * a Monte Carlo harness for the central limit theorem of the normalized
//!   word length, with martingale diagnostics ([`walks`]);
//! * desk-scale product-set combinatorics on `F_2`: sphere densities, the
//!   sphere-measure recursion, difference sets and thickness certificates
//!   ([`product_sets`]);
//! * affine isometric actions on finite-dimensional real inner-product
//!   spaces, energy minimization, and the resulting left-Lipschitz right
//!   harmonic functions ([`affine`]).
//!
//! All combinatorial and measure-theoretic identities are computed in exact
//! rational arithmetic; floating point only ever enters through logarithms,
//! real exponents and Monte Carlo statistics.

pub mod affine;
pub mod besov;
pub mod boundary;
pub mod error;
pub mod group;
pub mod measure;
pub mod numfmt;
pub mod product_sets;
pub mod walks;

pub use error::{Error, Result};
pub use group::{FreeWord, GroupDescriptor, GroupElement, LatticePoint, WordMetric};
pub use measure::FiniteMeasure;

/// Exact rational scalar used throughout the public API.
pub type Rational = num_rational::BigRational;

/// Doc-tested chapters of the accompanying guide in `book/`.
///
/// Every fenced Rust block in the book runs under `cargo test --doc`, which
/// keeps the narrative chapters and the library in sync.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/groups.md")]
    pub mod groups {}
    #[doc = include_str!("../../../book/src/measures.md")]
    pub mod measures {}
    #[doc = include_str!("../../../book/src/boundary.md")]
    pub mod boundary {}
    #[doc = include_str!("../../../book/src/besov.md")]
    pub mod besov {}
    #[doc = include_str!("../../../book/src/clt.md")]
    pub mod clt {}
    #[doc = include_str!("../../../book/src/product_sets.md")]
    pub mod product_sets {}
    #[doc = include_str!("../../../book/src/affine.md")]
    pub mod affine {}
}
