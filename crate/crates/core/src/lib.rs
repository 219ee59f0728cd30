//! Multivariate geometric distributions with the lack-of-memory property.
//!
//! Narrow-sense laws come from independent geometric shocks hitting subsets of
//! components; wide-sense laws come from first appearances in i.i.d. categorical
//! trials over subsets. Both are evaluated in closed form, sampled exactly, and
//! checked against independent brute-force oracles in [`verify`].

pub mod dependence;
pub mod error;
pub mod exchangeable;
pub mod extendibility;
pub mod samplers;
pub mod sequences;
pub mod shock_models;
pub mod subset_algebra;
pub mod verify;

pub mod cli;

pub use error::{Error, Result};

/// Numeric tolerances shared across modules.
pub mod tol {
    /// Parameter validation (sums, exchangeability).
    pub const VALIDATION: f64 = 1e-12;
    /// Sequence class membership.
    pub const MEMBERSHIP: f64 = 1e-12;
    /// Minimum eigenvalue accepted as positive semidefinite.
    pub const EIGEN: f64 = 1e-10;
    /// Largest negative rounding residue silently clamped in a pmf.
    pub const PMF_CLAMP: f64 = 1e-10;
    /// Closed form against oracle comparisons.
    pub const ORACLE: f64 = 1e-10;
}
