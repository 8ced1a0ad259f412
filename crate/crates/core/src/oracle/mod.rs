//! Exact references: Kalman filtering and smoothing, grid posteriors, and
//! exhaustive enumeration of coupled resampling laws on tiny systems.

mod enumerate;
mod grid;
mod kalman;

pub use enumerate::{
    detailed_balance_violation, enumerate_coupling, multinomial_law, sorted_law, JointOutcome,
};
pub use grid::{grid_posterior, GridPosterior};
pub use kalman::{kalman_loglik, kalman_smoother, KalmanOutput, LinearGaussianSpec, SmootherOutput};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;
