use rand::Rng;

use super::weights::{Cumulative, WeightVector};
use super::AncestorPairs;
use crate::error::{Error, Result};

/// Maximal coupling of two categorical laws on `0..N`:
/// `alpha * diag(mu) + (1 - alpha) * r r_tilde^T`.
#[derive(Debug, Clone)]
pub struct IndexCoupling {
    pub alpha: f64,
    pub mu: Vec<f64>,
    pub r: Vec<f64>,
    pub r_tilde: Vec<f64>,
    w: WeightVector,
    mu_cdf: Cumulative,
    r_cdf: Cumulative,
    r_tilde_cdf: Cumulative,
}

impl IndexCoupling {
    pub fn new(w: &WeightVector, w_tilde: &WeightVector) -> Result<Self> {
        let n = w.len();
        crate::error::check_len("w_tilde", n, w_tilde.len())?;
        let nu: Vec<f64> = (0..n).map(|i| w[i].min(w_tilde[i])).collect();
        let alpha: f64 = nu.iter().sum::<f64>().min(1.0);
        let mu = if alpha > 0.0 {
            nu.iter().map(|v| v / alpha).collect()
        } else {
            vec![0.0; n]
        };
        let residual = |v: &WeightVector| -> Vec<f64> {
            if alpha < 1.0 {
                let raw: Vec<f64> = (0..n).map(|i| (v[i] - nu[i]).max(0.0)).collect();
                let s: f64 = raw.iter().sum();
                if s > 0.0 {
                    raw.iter().map(|x| x / s).collect()
                } else {
                    vec![0.0; n]
                }
            } else {
                vec![0.0; n]
            }
        };
        let r = residual(w);
        let r_tilde = residual(w_tilde);
        Ok(IndexCoupling {
            alpha,
            mu_cdf: Cumulative::new(&mu),
            r_cdf: Cumulative::new(&r),
            r_tilde_cdf: Cumulative::new(&r_tilde),
            mu,
            r,
            r_tilde,
            w: w.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Joint mass of `(i, j)`.
    pub fn probability(&self, i: usize, j: usize) -> f64 {
        let diag = if i == j { self.alpha * self.mu[i] } else { 0.0 };
        diag + (1.0 - self.alpha) * self.r[i] * self.r_tilde[j]
    }

    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let u: f64 = rng.random();
        if u < self.alpha {
            let i = self.mu_cdf.sample(rng);
            (i, i)
        } else {
            (self.r_cdf.sample(rng), self.r_tilde_cdf.sample(rng))
        }
    }

    pub fn sample_pairs<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> AncestorPairs {
        let (a, a_tilde) = (0..count).map(|_| self.sample_pair(rng)).unzip();
        AncestorPairs { a, a_tilde }
    }

    /// Draw `j` from `P[i, .] / w[i]`.
    pub fn conditional<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<usize> {
        let wi = self.w[i];
        if wi <= 0.0 {
            return Err(Error::Inconsistent(format!(
                "conditioning on index {i} with zero weight"
            )));
        }
        let stay = self.alpha * self.mu[i] / wi;
        let u: f64 = rng.random();
        if u < stay {
            Ok(i)
        } else {
            Ok(self.r_tilde_cdf.sample(rng))
        }
    }
}
