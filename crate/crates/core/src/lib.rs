//! Numerical analysis toolkit for a three-dimensional slow-fast flow with a
//! cubic critical manifold: event-detecting adaptive integration, slow and
//! (un)stable invariant manifolds, one- and two-dimensional Poincare return
//! maps, and bifurcation scans built on top of them.

pub mod error;
pub mod integrator;
pub mod math;
pub mod sections;
pub mod system;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use system::{Params, State};
