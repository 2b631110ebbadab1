//! Numerical laboratory for the multi-particle Anderson model with
//! correlated, strongly mixing random potentials.
//!
//! The crate is organised bottom-up:
//!
//! - [`field`]: non-negative finite-range correlated lattice fields and
//!   diagnostics for their mixing and log-Hölder regularity;
//! - [`geometry`]: n-particle cubes `C^(n)_L(u)` on a finite-difference grid,
//!   with interior and outer shell masks;
//! - [`hamiltonian`]: sparse Dirichlet assembly of `-Δ + U + V`;
//! - [`spectral`]: spectral bottom, masked resolvent norms and the
//!   Combes–Thomas envelope;
//! - [`msa`]: decay rates, the nonsingularity test, Monte Carlo estimators for
//!   the probability bounds and localization demonstrations.

pub mod error;
pub mod field;
pub mod geometry;
pub mod hamiltonian;
pub mod msa;
pub mod sparse;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
