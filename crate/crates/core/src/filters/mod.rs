//! Bootstrap, coupled bootstrap, conditional and coupled conditional particle filters.
//!
//! Every filter resamples at each step `t = 0..T-1` with the weights of time
//! `t` (uniform at `t = 0`), propagates to `t + 1` and weighs with `y_{t+1}`.
//! Indices are 0-based; the pinned slot of a conditional filter is `N - 1`.

mod bpf;
mod cpf;
mod noise;

use std::sync::Arc;

pub use bpf::{bootstrap_pf, bpf_from_noise, conditional_rerun, coupled_bpf, replay};
pub use cpf::{coupled_cpf, cpf, CpfOptions, CpfOutput};
pub use noise::NoiseBlocks;

use crate::error::{check_len, Error, Result};
use crate::models::{ObservationSeries, Parameter, StateSpaceModel};
use crate::resampling::WeightVector;

/// A state path `x_{0:T}`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub d_x: usize,
    pub path: Vec<f64>,
}

impl Trajectory {
    pub fn new(d_x: usize, path: Vec<f64>) -> Result<Self> {
        if d_x == 0 || path.is_empty() || !path.len().is_multiple_of(d_x) {
            return Err(Error::Dimension { what: "trajectory", expected: d_x, got: path.len() });
        }
        if path.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("trajectory has non-finite entries".into()));
        }
        Ok(Trajectory { d_x, path })
    }

    /// Number of transitions `T`.
    pub fn horizon(&self) -> usize {
        self.path.len() / self.d_x - 1
    }

    pub fn at(&self, t: usize) -> &[f64] {
        &self.path[t * self.d_x..(t + 1) * self.d_x]
    }

    /// Bitwise equality, the meeting criterion for coupled chains.
    pub fn same_as(&self, other: &Trajectory) -> bool {
        self.path.len() == other.path.len()
            && self.path.iter().zip(&other.path).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Everything a filter run generated.
#[derive(Debug, Clone)]
pub struct FilterTrace {
    pub theta: Parameter,
    pub n: usize,
    pub d_x: usize,
    /// `T + 1` clouds of `N * d_x` states.
    pub states: Vec<Vec<f64>>,
    /// `T + 1` vectors of normalized log-weights.
    pub log_weights: Vec<Vec<f64>>,
    /// `T` ancestor vectors; `ancestors[t][k]` is the parent at time `t` of particle `k` at `t + 1`.
    pub ancestors: Vec<Vec<usize>>,
    pub noise: Arc<NoiseBlocks>,
    /// `log(N^-1 sum_k g(y_t | x_t^k))` for `t = 1..T`.
    pub loglik_increments: Vec<f64>,
    /// Some step had all measurement densities equal to zero.
    pub degenerate: bool,
}

impl FilterTrace {
    pub fn horizon(&self) -> usize {
        self.ancestors.len()
    }

    pub fn loglik(&self) -> f64 {
        self.loglik_increments.iter().sum()
    }

    pub fn weights(&self, t: usize) -> WeightVector {
        let (w, _) = WeightVector::from_log_weights(&self.log_weights[t])
            .expect("stored log-weights are normalized");
        w
    }

    pub fn particle(&self, t: usize, k: usize) -> &[f64] {
        &self.states[t][k * self.d_x..(k + 1) * self.d_x]
    }

    /// The path ending in particle `b` at time `T`.
    pub fn trajectory(&self, b: usize) -> Trajectory {
        let t_max = self.horizon();
        let mut path = vec![0.0; (t_max + 1) * self.d_x];
        let mut k = b;
        for t in (0..=t_max).rev() {
            path[t * self.d_x..(t + 1) * self.d_x].copy_from_slice(self.particle(t, k));
            if t > 0 {
                k = self.ancestors[t - 1][k];
            }
        }
        Trajectory { d_x: self.d_x, path }
    }

    /// `masses[t][j]`: total final weight of the particles at time `T` that
    /// descend from particle `j` at time `t`.
    pub fn lineage_masses(&self) -> Vec<Vec<f64>> {
        let t_max = self.horizon();
        let mut out = vec![Vec::new(); t_max + 1];
        out[t_max] = self.weights(t_max).as_slice().to_vec();
        for t in (0..t_max).rev() {
            let mut m = vec![0.0; self.n];
            for (k, &a) in self.ancestors[t].iter().enumerate() {
                m[a] += out[t + 1][k];
            }
            out[t] = m;
        }
        out
    }
}

/// Step-by-step driver shared by all filters. With a reference path the last
/// slot is pinned to it instead of being propagated.
pub(crate) struct Runner<'a> {
    model: &'a dyn StateSpaceModel,
    theta: &'a Parameter,
    y: &'a ObservationSeries,
    noise: Arc<NoiseBlocks>,
    reference: Option<&'a Trajectory>,
    n: usize,
    d_x: usize,
    states: Vec<Vec<f64>>,
    log_weights: Vec<Vec<f64>>,
    weights: WeightVector,
    ancestors: Vec<Vec<usize>>,
    increments: Vec<f64>,
    degenerate: bool,
}

impl<'a> Runner<'a> {
    pub(crate) fn start(
        model: &'a dyn StateSpaceModel,
        theta: &'a Parameter,
        y: &'a ObservationSeries,
        noise: Arc<NoiseBlocks>,
        reference: Option<&'a Trajectory>,
    ) -> Result<Self> {
        model.check_parameter(theta)?;
        let spec = model.spec();
        check_len("observation dimension", spec.d_y, y.d_y())?;
        noise.check_shape(spec, y.len())?;
        let n = noise.n;
        let d_x = spec.d_x;
        if n == 0 {
            return Err(Error::InvalidParameter("need at least one particle".into()));
        }
        if let Some(r) = reference {
            check_len("reference dimension", d_x, r.d_x)?;
            check_len("reference horizon", y.len(), r.horizon())?;
        }
        let mut x0 = vec![0.0; n * d_x];
        for k in 0..n {
            let out = &mut x0[k * d_x..(k + 1) * d_x];
            match reference {
                Some(r) if k == n - 1 => out.copy_from_slice(r.at(0)),
                _ => model.init_into(noise.init_block(k), theta, out)?,
            }
        }
        let uniform = vec![-(n as f64).ln(); n];
        Ok(Runner {
            model,
            theta,
            y,
            noise,
            reference,
            n,
            d_x,
            states: vec![x0],
            log_weights: vec![uniform],
            weights: WeightVector::uniform(n),
            ancestors: Vec::with_capacity(y.len()),
            increments: Vec::with_capacity(y.len()),
            degenerate: false,
        })
    }

    /// Time index of the current cloud.
    pub(crate) fn time(&self) -> usize {
        self.ancestors.len()
    }

    pub(crate) fn done(&self) -> bool {
        self.time() == self.y.len()
    }

    pub(crate) fn states(&self) -> &[f64] {
        self.states.last().expect("at least the initial cloud")
    }

    pub(crate) fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub(crate) fn log_weights(&self) -> &[f64] {
        self.log_weights.last().expect("at least the initial cloud")
    }

    pub(crate) fn noise(&self) -> &NoiseBlocks {
        &self.noise
    }

    /// Log ancestor-sampling weights `log w_t^k + log f(x_{t+1}^ref | x_t^k)`.
    pub(crate) fn ancestor_sampling_log_weights(&self) -> Result<Vec<f64>> {
        let r = self.reference.ok_or_else(|| {
            Error::Inconsistent("ancestor sampling needs a reference path".into())
        })?;
        let t = self.time();
        let target = r.at(t + 1);
        let x = self.states();
        let lw = self.log_weights();
        (0..self.n)
            .map(|k| {
                let lf = self.model.log_transition(
                    &x[k * self.d_x..(k + 1) * self.d_x],
                    target,
                    self.theta,
                    t + 1,
                )?;
                Ok(lw[k] + lf)
            })
            .collect()
    }

    /// Resample with `a`, propagate to `t + 1` and weigh.
    pub(crate) fn advance(&mut self, a: Vec<usize>) -> Result<()> {
        let t = self.time();
        if t >= self.y.len() {
            return Err(Error::Inconsistent("filter already reached the horizon".into()));
        }
        check_len("ancestor vector", self.n, a.len())?;
        if let Some(&bad) = a.iter().find(|&&i| i >= self.n) {
            return Err(Error::Dimension { what: "ancestor index", expected: self.n, got: bad });
        }
        let d = self.d_x;
        let prev = self.states();
        let mut next = vec![0.0; self.n * d];
        for k in 0..self.n {
            let out = &mut next[k * d..(k + 1) * d];
            match self.reference {
                Some(r) if k == self.n - 1 => out.copy_from_slice(r.at(t + 1)),
                _ => {
                    let parent = &prev[a[k] * d..(a[k] + 1) * d];
                    self.model.propagate_into(
                        parent,
                        self.noise.prop_block(t + 1, k),
                        self.theta,
                        t + 1,
                        out,
                    )?
                }
            }
        }
        let y = self.y.at(t + 1);
        let log_g: Vec<f64> = (0..self.n)
            .map(|k| self.model.log_measurement(y, &next[k * d..(k + 1) * d], self.theta, t + 1))
            .collect();
        if log_g.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Numerical(format!("measurement density is NaN or +inf at t = {}", t + 1)));
        }
        let lse = crate::resampling::log_sum_exp(&log_g);
        let increment = lse - (self.n as f64).ln();
        let normalized: Vec<f64> = if lse == f64::NEG_INFINITY {
            self.degenerate = true;
            vec![-(self.n as f64).ln(); self.n]
        } else {
            log_g.iter().map(|l| l - lse).collect()
        };
        // Derived from the stored log-weights so that `FilterTrace::weights`
        // reproduces it bit for bit.
        self.weights = WeightVector::from_log_weights(&normalized)?.0;
        self.states.push(next);
        self.log_weights.push(normalized);
        self.ancestors.push(a);
        self.increments.push(increment);
        Ok(())
    }

    pub(crate) fn finish(self) -> FilterTrace {
        FilterTrace {
            theta: self.theta.clone(),
            n: self.n,
            d_x: self.d_x,
            states: self.states,
            log_weights: self.log_weights,
            ancestors: self.ancestors,
            noise: self.noise,
            loglik_increments: self.increments,
            degenerate: self.degenerate,
        }
    }
}
