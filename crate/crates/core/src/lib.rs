//! Constrained optimization over products of skew-symmetric and symmetric
//! positive definite matrices, with an elastic sequential quadratic solver
//! and a system-identification experiment harness.

pub mod error;
pub mod guide;
pub mod harness;
pub mod manifold;
pub mod model;
pub mod qp;
pub mod solver;

pub use error::{Error, Result};
