//! Coupled particle filters.
//!
//! Coupled resampling schemes (independent, index-coupled, sorted, transport)
//! and the algorithms built on them: coupled bootstrap and conditional
//! particle filters, finite-difference score estimates, correlated particle
//! marginal Metropolis-Hastings, and unbiased Rhee-Glynn smoothing. Exact
//! Kalman and enumeration oracles live in [`oracle`].
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod filters;
pub mod inference;
pub mod models;
pub mod oracle;
pub mod resampling;
pub mod rng;
pub mod smoothing;
pub mod stats;

pub use error::{Error, Result};
