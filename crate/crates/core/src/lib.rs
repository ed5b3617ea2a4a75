//! Couplings of random walk Metropolis chains and their high-dimensional
//! limits.
//!
//! The crate is organised bottom-up: [`special`] and [`rng`] provide the
//! numerical primitives, [`targets`] the log-density oracles, [`kernels`]
//! and [`couplings`] the Markov transitions, [`ode`] and [`fixed_points`] the
//! deterministic limits, and [`diagnostics`] the meeting-time and bias
//! estimators built on top.

pub mod error;
pub mod fixed_points;
pub mod couplings;
pub mod diagnostics;
pub mod kernels;
pub mod ode;
pub mod rng;
pub mod special;
pub mod targets;

pub use error::{Error, Result};
pub use rng::{sample_gaussians, RngStream};
