use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GridPosterior {
    pub grid: Vec<f64>,
    /// Trapezoid quadrature masses, summing to one.
    pub masses: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

/// Posterior of a scalar parameter on a sorted grid from its exact
/// log-likelihood and log-prior.
pub fn grid_posterior<L, P>(grid: &[f64], mut loglik: L, log_prior: P) -> Result<GridPosterior>
where
    L: FnMut(f64) -> Result<f64>,
    P: Fn(f64) -> f64,
{
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
    }
    let logp: Vec<f64> = grid
        .iter()
        .map(|&th| Ok(loglik(th)? + log_prior(th)))
        .collect::<Result<_>>()?;
    let top = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY || top.is_nan() {
        return Err(Error::Numerical("posterior is zero on the whole grid".into()));
    }
    let n = grid.len();
    let quad: Vec<f64> = if n == 1 {
        vec![1.0]
    } else {
        (0..n)
            .map(|i| {
                let left = if i > 0 { grid[i] - grid[i - 1] } else { 0.0 };
                let right = if i + 1 < n { grid[i + 1] - grid[i] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect()
    };
    let raw: Vec<f64> = logp.iter().zip(&quad).map(|(l, q)| (l - top).exp() * q).collect();
    let z: f64 = raw.iter().sum();
    let masses: Vec<f64> = raw.iter().map(|r| r / z).collect();
    let mean: f64 = masses.iter().zip(grid).map(|(m, g)| m * g).sum();
    let var: f64 = masses.iter().zip(grid).map(|(m, g)| m * (g - mean).powi(2)).sum();
    Ok(GridPosterior { grid: grid.to_vec(), masses, mean, sd: var.sqrt() })
}
