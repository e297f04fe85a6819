//! l1-penalized nonconvex M-estimation for single-index models, with the
//! matching penalty schedules, an exhaustive low-dimensional oracle, and a
//! Monte Carlo toolkit for checking the conditions behind the
//! `s0 * sqrt(log(nd) / n)` estimation rate.

pub mod design_lab;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model_zoo;
pub mod quadrature;
pub mod rng;
pub mod solver;
pub mod theory_probe;

pub use error::{Error, Result};
