//! Monte Carlo execution of stochastic policies on controlled diffusions.
//!
//! Actions drawn at discrete grid points and held constant drive the
//! *sampled* dynamics; averaging the coefficients over the policy gives the
//! *aggregated* dynamics. This crate simulates both on shared Brownian
//! lattices and measures how far apart they are: weak, strong and
//! conditional errors, value and policy-gradient biases, and the sample
//! complexity of the associated Monte Carlo estimators.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod policy;
pub mod presets;
pub mod rng;
pub mod stats;

pub use error::{PolexError, Result};
