use rand::Rng;

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Normalized, non-negative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidWeights(format!(
                "negative or non-finite entry in {w:?}"
            )));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > SUM_TOL * w.len().max(1) as f64 {
            return Err(Error::InvalidWeights(format!("weights sum to {s}")));
        }
        Ok(WeightVector(w))
    }

    /// Normalize `exp(log_w)`. Returns the weights and `log(sum exp(log_w))`.
    /// If every entry is `-inf` the weights are uniform and the log-sum is `-inf`.
    pub fn from_log_weights(log_w: &[f64]) -> Result<(Self, f64)> {
        if log_w.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        let lse = log_sum_exp(log_w);
        if lse == f64::NEG_INFINITY {
            let n = log_w.len();
            return Ok((WeightVector(vec![1.0 / n as f64; n]), lse));
        }
        if !lse.is_finite() {
            return Err(Error::InvalidWeights(format!("log-sum-exp is {lse}")));
        }
        let mut w: Vec<f64> = log_w.iter().map(|l| (l - lse).exp()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        Ok((WeightVector(w), lse))
    }

    pub fn uniform(n: usize) -> Self {
        WeightVector(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn cumulative(&self) -> Cumulative {
        Cumulative::new(&self.0)
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Running sums of non-negative masses, for inverse-CDF draws.
#[derive(Debug, Clone)]
pub struct Cumulative {
    cdf: Vec<f64>,
    last_positive: usize,
}

impl Cumulative {
    pub fn new(mass: &[f64]) -> Self {
        let mut acc = 0.0;
        let mut last_positive = 0;
        let cdf = mass
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                if m > 0.0 {
                    last_positive = i;
                }
                acc += m;
                acc
            })
            .collect();
        Cumulative { cdf, last_positive }
    }

    pub fn total(&self) -> f64 {
        self.cdf.last().copied().unwrap_or(0.0)
    }

    /// Smallest index whose cumulative mass exceeds `u * total`, for `u` in `[0, 1)`.
    /// Zero-mass entries are never returned.
    pub fn invert(&self, u: f64) -> usize {
        let target = u * self.total();
        let i = self.cdf.partition_point(|&c| c <= target);
        i.min(self.last_positive)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.invert(rng.random::<f64>())
    }
}

/// Multinomial ancestors: one inverse-CDF draw per uniform.
pub fn multinomial_from_uniforms(w: &WeightVector, uniforms: &[f64]) -> Vec<usize> {
    let c = w.cumulative();
    uniforms.iter().map(|&u| c.invert(u)).collect()
}

pub fn multinomial<R: Rng + ?Sized>(w: &WeightVector, count: usize, rng: &mut R) -> Vec<usize> {
    let c = w.cumulative();
    (0..count).map(|_| c.sample(rng)).collect()
}

/// Systematic resampling in index order: `count` points `(k + offset) / count`.
pub fn systematic(w: &[f64], count: usize, offset: f64) -> Vec<usize> {
    systematic_in_order(w, None, count, offset)
}

/// Systematic resampling along a visiting `order` of the particles.
pub(crate) fn systematic_in_order(
    w: &[f64],
    order: Option<&[usize]>,
    count: usize,
    offset: f64,
) -> Vec<usize> {
    let n = w.len();
    let idx = |j: usize| order.map_or(j, |o| o[j]);
    let total: f64 = w.iter().sum();
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    let mut acc = w[idx(0)];
    let mut last_positive = 0;
    for pos in 0..n {
        if w[idx(pos)] > 0.0 {
            last_positive = pos;
        }
    }
    for k in 0..count {
        let target = (k as f64 + offset) / count as f64 * total;
        while acc <= target && j < last_positive {
            j += 1;
            acc += w[idx(j)];
        }
        out.push(idx(j));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.1, 1.1]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
    }

    #[test]
    fn log_weights_extreme() {
        let (w, lse) = WeightVector::from_log_weights(&[-700.0, -701.0, -1e308]).unwrap();
        assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(w[0] > w[1] && w[2] == 0.0);
        assert!((lse - (-700.0 + (1.0 + (-1f64).exp()).ln())).abs() < 1e-12);
        let (w, lse) = WeightVector::from_log_weights(&[f64::NEG_INFINITY; 3]).unwrap();
        assert_eq!(lse, f64::NEG_INFINITY);
        assert_eq!(w.as_slice(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn invert_skips_zero_mass() {
        let c = Cumulative::new(&[0.0, 0.5, 0.0, 0.5, 0.0]);
        assert_eq!(c.invert(0.0), 1);
        assert_eq!(c.invert(0.49), 1);
        assert_eq!(c.invert(0.5), 3);
        assert_eq!(c.invert(0.999_999_999), 3);
        assert_eq!(c.invert(1.0), 3);
    }

    #[test]
    fn systematic_counts() {
        let w = [0.1, 0.4, 0.0, 0.5];
        let a = systematic(&w, 10, 0.5);
        let counts: Vec<usize> = (0..4).map(|i| a.iter().filter(|&&x| x == i).count()).collect();
        assert_eq!(counts, vec![1, 4, 0, 5]);
        let order = [3, 2, 1, 0];
        let b = systematic_in_order(&w, Some(&order), 2, 0.3);
        assert_eq!(b, vec![3, 1]);
    }
}
