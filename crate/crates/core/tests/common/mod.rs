#![allow(dead_code)]

use coupledpf::models::{simulate, HiddenAr, ObservationSeries, Parameter};
use coupledpf::oracle::{kalman_loglik, kalman_smoother, LinearGaussianSpec};
use coupledpf::rng::SeedKey;

pub struct Toy {
    pub model: HiddenAr,
    pub theta: Parameter,
    pub y: ObservationSeries,
}

impl Toy {
    /// Scalar hidden-AR data simulated at `theta`.
    pub fn new(theta: f64, horizon: usize, seed: u64) -> Self {
        let model = HiddenAr::new(1).unwrap();
        let theta = Parameter::scalar(theta).unwrap();
        let y = simulate(&model, &theta, horizon, SeedKey::new(seed)).unwrap().observations;
        Toy { model, theta, y }
    }

    fn spec(&self) -> LinearGaussianSpec {
        LinearGaussianSpec::hidden_ar(self.theta[0], 1).unwrap()
    }

    pub fn loglik(&self) -> f64 {
        kalman_loglik(&self.spec(), &self.y).unwrap().loglik
    }

    pub fn smoothing_means(&self) -> Vec<f64> {
        kalman_smoother(&self.spec(), &self.y).unwrap().means.iter().map(|m| m[0]).collect()
    }
}
