//! Finite-difference score estimation and correlated particle marginal
//! Metropolis-Hastings.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::filters::{bootstrap_pf, conditional_rerun, coupled_bpf, replay, FilterTrace};
use crate::models::{ObservationSeries, Parameter, StateSpaceModel};
use crate::resampling::{Scheme, TransportParams};
use crate::rng::{stream, Role, SeedKey};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdResult {
    pub estimate: f64,
    pub loglik_plus: f64,
    pub loglik_minus: f64,
    pub h: f64,
}

/// Centred difference `(log p(y | theta + h e_i) - log p(y | theta - h e_i)) / 2h`
/// from one coupled pair of bootstrap filters.
#[allow(clippy::too_many_arguments)]
pub fn fd_score(
    model: &dyn StateSpaceModel,
    theta: &Parameter,
    index: usize,
    h: f64,
    y: &ObservationSeries,
    n: usize,
    scheme: Scheme,
    params: &TransportParams,
    key: SeedKey,
) -> Result<FdResult> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("perturbation must be positive, got {h}")));
    }
    let plus = theta.shifted(index, h)?;
    let minus = theta.shifted(index, -h)?;
    let (tp, tm) = coupled_bpf(model, &plus, &minus, y, n, scheme, params, key)?;
    if tp.degenerate || tm.degenerate {
        return Err(Error::Numerical("a filter of the pair has all-zero weights".into()));
    }
    let (lp, lm) = (tp.loglik(), tm.loglik());
    Ok(FdResult { estimate: (lp - lm) / (2.0 * h), loglik_plus: lp, loglik_minus: lm, h })
}

/// Sample correlation of paired log-likelihoods and the gain `1 / (1 - rho)`.
pub fn correlation_gain(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let rho = crate::stats::correlation(&a, &b)?;
    Ok((rho, 1.0 / (1.0 - rho)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ess {
    pub value: f64,
    /// Integrated autocorrelation time.
    pub iact: f64,
    /// The series was constant; `value` is then the chain length.
    pub degenerate: bool,
}

/// Effective sample size `M / IACT`, with the autocorrelation sum truncated
/// by Geyer's initial positive sequence on pairs `rho_{2k+1} + rho_{2k+2}`.
pub fn ess(values: &[f64]) -> Result<Ess> {
    let m = values.len();
    if m < 100 {
        return Err(Error::NotEnoughData(format!("ESS needs at least 100 values, got {m}")));
    }
    let mean = crate::stats::mean(values);
    let c: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let autocov = |k: usize| c[..m - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / m as f64;
    let g0 = autocov(0);
    if g0 <= 0.0 {
        return Ok(Ess { value: m as f64, iact: 1.0, degenerate: true });
    }
    let mut sum = 0.0;
    let mut k = 1;
    while k + 1 < m {
        let pair = (autocov(k) + autocov(k + 1)) / g0;
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 2;
    }
    let iact = 1.0 + 2.0 * sum;
    Ok(Ess { value: m as f64 / iact, iact, degenerate: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmmhOptions {
    pub n_particles: usize,
    pub iterations: usize,
    pub proposal_sd: Vec<f64>,
    /// Correlation of the autoregressive refresh of the noise.
    pub rho: f64,
    pub scheme: Scheme,
    pub transport: TransportParams,
}

impl PmmhOptions {
    pub fn validate(&self, d_theta: usize) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::InvalidParameter("need at least one particle".into()));
        }
        check_len("proposal sd", d_theta, self.proposal_sd.len())?;
        if self.proposal_sd.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("proposal sd must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!("rho must be in [0, 1], got {}", self.rho)));
        }
        if !self.scheme.is_reversible() {
            return Err(Error::Unsupported(format!(
                "scheme '{}' does not satisfy detailed balance; use transport-sym, index, sorted or independent",
                self.scheme
            )));
        }
        self.transport.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcChain {
    /// One parameter vector per iteration.
    pub theta: Vec<Vec<f64>>,
    pub loglik: Vec<f64>,
    pub accepted: Vec<bool>,
}

impl McmcChain {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted.iter().filter(|a| **a).count() as f64 / self.accepted.len().max(1) as f64
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.theta.iter().map(|t| t[i]).collect()
    }
}

/// Log of the Metropolis-Hastings ratio for a symmetric proposal.
pub fn log_acceptance_ratio(loglik: f64, log_prior: f64, loglik_prop: f64, log_prior_prop: f64) -> f64 {
    (loglik_prop + log_prior_prop) - (loglik + log_prior)
}

const REPLAY_CHECK_EVERY: usize = 1000;

/// Correlated particle marginal Metropolis-Hastings. The chain state is the
/// parameter and the whole particle system; proposals move the parameter by
/// a Gaussian random walk, refresh the noise autoregressively and rerun the
/// filter conditionally on the current one.
pub fn correlated_pmmh(
    model: &dyn StateSpaceModel,
    log_prior: &dyn Fn(&[f64]) -> f64,
    y: &ObservationSeries,
    theta0: &Parameter,
    opts: &PmmhOptions,
    key: SeedKey,
) -> Result<McmcChain> {
    opts.validate(model.spec().d_theta)?;
    model.check_parameter(theta0)?;
    let mut lp = log_prior(theta0.values());
    if !lp.is_finite() {
        return Err(Error::InvalidParameter("log-prior is not finite at the initial parameter".into()));
    }
    let mut trace = bootstrap_pf(model, theta0, y, opts.n_particles, key.derive(0))?;
    let mut ll = trace.loglik();
    let mut theta = theta0.clone();
    let mut chain = McmcChain {
        theta: Vec::with_capacity(opts.iterations),
        loglik: Vec::with_capacity(opts.iterations),
        accepted: Vec::with_capacity(opts.iterations),
    };
    for i in 1..=opts.iterations {
        let step_key = key.derive(i as u64);
        let mut rng = stream(step_key.role(Role::Mcmc));
        let proposal: Vec<f64> = theta
            .values()
            .iter()
            .zip(&opts.proposal_sd)
            .map(|(t, s)| t + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let log_u = rng.random::<f64>().ln();
        let mut accepted = false;
        if let Some((prop, lp_prop, t_prop)) = propose(model, log_prior, y, &trace, proposal, opts, step_key)? {
            let ratio = log_acceptance_ratio(ll, lp, t_prop.loglik(), lp_prop);
            if log_u < ratio {
                theta = prop;
                lp = lp_prop;
                ll = t_prop.loglik();
                trace = t_prop;
                accepted = true;
            }
        }
        if cfg!(debug_assertions) && i % REPLAY_CHECK_EVERY == 0 {
            debug_assert_eq!(replay(model, y, &trace)?.iter().sum::<f64>(), ll);
        }
        chain.theta.push(theta.values().to_vec());
        chain.loglik.push(ll);
        chain.accepted.push(accepted);
    }
    Ok(chain)
}

type Proposal = (Parameter, f64, FilterTrace);

fn propose(
    model: &dyn StateSpaceModel,
    log_prior: &dyn Fn(&[f64]) -> f64,
    y: &ObservationSeries,
    trace: &FilterTrace,
    proposal: Vec<f64>,
    opts: &PmmhOptions,
    key: SeedKey,
) -> Result<Option<Proposal>> {
    let prop = match Parameter::new(proposal) {
        Ok(p) => p,
        Err(_) => return Ok(None),
    };
    if model.check_parameter(&prop).is_err() {
        return Ok(None);
    }
    let lp_prop = log_prior(prop.values());
    if lp_prop == f64::NEG_INFINITY {
        return Ok(None);
    }
    let noise = Arc::new(trace.noise.crn_shift(opts.rho, key.role(Role::Mcmc).time(1))?);
    match conditional_rerun(model, y, trace, &prop, noise, opts.scheme, &opts.transport, key) {
        Ok(t) => Ok(Some((prop, lp_prop, t))),
        Err(Error::ModelBlowUp { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}
