#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Principal eigenpairs, groundstate-weighted estimates and certified sign
//! information for Schrödinger operators `-Δ + q` with radial potentials that
//! grow faster than quadratically, together with semilinear and 2×2
//! cooperative extensions solved by sub/supersolution brackets.

pub mod coop_system;
pub mod error;
pub mod groundstate_space;
pub mod linear_solver;
pub mod radial_grid;
pub mod semilinear_solver;
pub mod spectral;
pub mod tridiag;

pub use error::{Error, Result};
