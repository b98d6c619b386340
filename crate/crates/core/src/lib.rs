//! Numerical laboratory for periodic Serrin domains.
//!
//! The pipeline has four stages, each in its own module:
//!
//! * [`geometry`] describes axially symmetric, periodic profile domains
//!   `{(z, t) : |z| < φ(t)}` and the boundary-fitted grids used on the
//!   symmetry cell `0 ≤ ρ ≤ 1, 0 ≤ t ≤ λ`.
//! * [`torsion`] solves `−Δu = 1` with `u = 0` on the lateral boundary and
//!   evaluates the overdetermined Neumann data.
//! * [`serrin`] drives the Neumann data to a constant by Newton's method on
//!   the profile coefficients and continues the resulting branch.
//! * [`cheeger`] certifies the relative Cheeger identity `h = 1/β` and the
//!   calibration `ξ = ∇u/β`; [`cmc`] builds the periodic constant mean
//!   curvature graph by the shrinking-domain scheme.

// `!(x > 0.0)` guards reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cheeger;
pub mod cmc;
mod energy;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod linalg;
pub mod quadrature;
pub mod serrin;
pub mod torsion;

pub use error::{Error, Result};

/// Crate version, embedded in every artifact written by the workbench.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
