//! The narrative guide, mirrored from the book chapters under `book/`.
//!
//! Including the chapters as module documentation makes `cargo test --doc`
//! compile and run every code block in the book, so the guide cannot drift
//! from the crate.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}

#[doc = include_str!("../../../book/src/identification.md")]
pub mod identification {}

#[doc = include_str!("../../../book/src/subproblems.md")]
pub mod subproblems {}

#[doc = include_str!("../../../book/src/solver.md")]
pub mod solver_loop {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
