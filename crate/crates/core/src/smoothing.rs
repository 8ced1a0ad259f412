//! Unbiased smoothing from coupled conditional particle filters.
//!
//! Two chains of conditional particle filter kernels, one lagged by a step,
//! are run until the sampled trajectories coincide. The telescoping sum of
//! test-function differences is unbiased for the smoothing expectation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::filters::{bootstrap_pf, coupled_cpf, cpf, CpfOptions, CpfOutput, FilterTrace, Trajectory};
use crate::models::{ObservationSeries, Parameter, StateSpaceModel};
use crate::resampling::{Scheme, TransportParams};
use crate::rng::{stream, Role, SeedKey};

pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

/// Test functions evaluated at every time and state coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    MeanPerTime,
    SecondMomentPerTime,
}

impl TestFunction {
    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::MeanPerTime => "mean-per-time",
            TestFunction::SecondMomentPerTime => "second-moment-per-time",
        }
    }

    fn apply(&self, x: f64) -> f64 {
        match self {
            TestFunction::MeanPerTime => x,
            TestFunction::SecondMomentPerTime => x * x,
        }
    }

    /// Values at `(t, i)`, stored at `t * d_x + i`.
    pub fn eval(&self, path: &Trajectory) -> Vec<f64> {
        path.path.iter().map(|&x| self.apply(x)).collect()
    }

    /// `sum_k w_T^k h(x_{0:T}^k)` over the trajectories of a particle system.
    pub fn eval_weighted(&self, trace: &FilterTrace) -> Vec<f64> {
        let d = trace.d_x;
        let masses = trace.lineage_masses();
        let mut out = vec![0.0; masses.len() * d];
        for (t, m) in masses.iter().enumerate() {
            for (j, &mj) in m.iter().enumerate() {
                if mj == 0.0 {
                    continue;
                }
                for i in 0..d {
                    out[t * d + i] += mj * self.apply(trace.states[t][j * d + i]);
                }
            }
        }
        out
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [TestFunction::MeanPerTime, TestFunction::SecondMomentPerTime]
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown test function '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationPolicy {
    None,
    /// Start the estimator at iteration `m` (the `H_{m, inf}` form).
    FixedM(usize),
    /// Stop the sum at a geometric time `G` with `P(G >= n) = (1 - p)^n`,
    /// reweighting the `n`-th increment by `1 / P(G >= n)`. Large `p` can give
    /// infinite variance; there is no practical bound on it.
    Geometric(f64),
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        if let TruncationPolicy::Geometric(p) = self {
            if !(0.0..1.0).contains(p) {
                return Err(Error::InvalidParameter(format!("geometric p must be in [0, 1), got {p}")));
            }
        }
        Ok(())
    }
}

/// Weight applied to the `n`-th increment.
pub fn truncated_weight(policy: &TruncationPolicy, n: usize) -> f64 {
    match policy {
        TruncationPolicy::Geometric(p) => (1.0 - p).powi(-(n as i32)),
        _ => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgOptions {
    pub n_particles: usize,
    pub test_function: TestFunction,
    pub policy: TruncationPolicy,
    pub rao_blackwell: bool,
    pub ancestor_sampling: bool,
    pub max_iterations: usize,
    /// Index-coupled by default. Independent resampling and the common-uniform
    /// systematic baseline are accepted for comparisons.
    pub scheme: Scheme,
}

impl RgOptions {
    pub fn new(n_particles: usize) -> Self {
        RgOptions {
            n_particles,
            test_function: TestFunction::MeanPerTime,
            policy: TruncationPolicy::None,
            rao_blackwell: false,
            ancestor_sampling: false,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            scheme: Scheme::IndexCoupled,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::InvalidParameter("need at least two particles".into()));
        }
        if self.max_iterations < 2 {
            return Err(Error::InvalidParameter("max_iterations must be at least 2".into()));
        }
        match self.scheme {
            Scheme::IndexCoupled | Scheme::Independent | Scheme::CommonSystematic => {}
            s => {
                return Err(Error::Unsupported(format!(
                    "scheme '{s}' does not guarantee P[i,i] >= w[i] w~[i]; use index"
                )))
            }
        }
        self.policy.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgEstimate {
    pub h: Vec<f64>,
    /// Meeting time, if the chains met before the run stopped.
    pub tau: Option<usize>,
    pub iterations_run: usize,
    /// False when the iteration cap was hit first; such estimates are biased.
    pub complete: bool,
    /// Filter sweeps times `N * T`.
    pub cost_units: u64,
}

fn h_of(opts: &RgOptions, out: &CpfOutput) -> Vec<f64> {
    if opts.rao_blackwell {
        opts.test_function.eval_weighted(&out.trace)
    } else {
        opts.test_function.eval(&out.trajectory)
    }
}

fn initial(
    model: &dyn StateSpaceModel,
    theta: &Parameter,
    y: &ObservationSeries,
    opts: &RgOptions,
    key: SeedKey,
) -> Result<CpfOutput> {
    let trace = bootstrap_pf(model, theta, y, opts.n_particles, key)?;
    if trace.degenerate {
        return Err(Error::Numerical("initial particle filter has all-zero weights".into()));
    }
    let mut rng = stream(key.role(Role::Mcmc));
    let b = trace.weights(trace.horizon()).cumulative().sample(&mut rng);
    Ok(CpfOutput { trajectory: trace.trajectory(b), trace, b })
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add_scaled(acc: &mut [f64], v: &[f64], s: f64) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += s * b);
}

/// One Rhee-Glynn estimate. `TruncationPolicy::FixedM` gives the `H_{m, inf}`
/// variant.
pub fn rg_estimate(
    model: &dyn StateSpaceModel,
    theta: &Parameter,
    y: &ObservationSeries,
    opts: &RgOptions,
    key: SeedKey,
) -> Result<RgEstimate> {
    opts.validate()?;
    let n = opts.n_particles;
    let sweep_cost = (n * y.len()) as u64;
    let cpf_opts = CpfOptions {
        ancestor_sampling: opts.ancestor_sampling,
        scheme: opts.scheme,
        transport: TransportParams::default(),
    };
    let m = match opts.policy {
        TruncationPolicy::FixedM(m) => m,
        _ => 0,
    };
    let horizon_g = match opts.policy {
        TruncationPolicy::Geometric(p) if p > 0.0 => {
            let mut rng = stream(key.derive(0x6e0).role(Role::Mcmc));
            let mut g = 0usize;
            while rng.random::<f64>() >= p {
                g += 1;
            }
            Some(g)
        }
        _ => None,
    };

    let x0 = initial(model, theta, y, opts, key.derive(0))?;
    let xt0 = initial(model, theta, y, opts, key.derive(1))?;
    let h0 = h_of(opts, &x0);
    let mut sum = if m == 0 { h0.clone() } else { vec![0.0; h0.len()] };
    let x1 = cpf(model, theta, y, n, &x0.trajectory, opts.ancestor_sampling, key.derive(2))?;
    let mut h_x = h_of(opts, &x1);
    let mut h_xt_prev = h_of(opts, &xt0);
    let mut cost = 3 * sweep_cost;
    if m == 1 {
        sum = h_x.clone();
    } else if m == 0 && horizon_g.is_none_or(|g| g >= 1) {
        add_scaled(&mut sum, &sub(&h_x, &h_xt_prev), truncated_weight(&opts.policy, 1));
    }

    let mut x = x1;
    let mut xt = xt0;
    let mut tau: Option<usize> = None;
    let mut iter = 1usize;
    loop {
        let finished = match (tau, horizon_g) {
            (_, Some(g)) if iter >= g => true,
            (Some(t), _) => iter >= t.max(m),
            _ => false,
        };
        if finished {
            break;
        }
        if iter >= opts.max_iterations {
            return Ok(RgEstimate { h: sum, tau, iterations_run: iter, complete: false, cost_units: cost });
        }
        iter += 1;
        let sweep_key = key.derive(2 + iter as u64);
        if tau.is_some() {
            x = cpf(model, theta, y, n, &x.trajectory, opts.ancestor_sampling, sweep_key)?;
            cost += sweep_cost;
            h_x = h_of(opts, &x);
            if iter == m {
                sum = h_x.clone();
            }
            continue;
        }
        let (nx, nxt) = coupled_cpf(model, theta, y, n, &x.trajectory, &xt.trajectory, &cpf_opts, sweep_key)?;
        cost += 2 * sweep_cost;
        h_x = h_of(opts, &nx);
        h_xt_prev = h_of(opts, &nxt);
        if nx.trajectory.same_as(&nxt.trajectory) {
            tau = Some(iter);
        }
        if iter == m {
            sum = h_x.clone();
        } else if iter > m {
            add_scaled(&mut sum, &sub(&h_x, &h_xt_prev), truncated_weight(&opts.policy, iter));
        }
        x = nx;
        xt = nxt;
    }
    Ok(RgEstimate { h: sum, tau, iterations_run: iter, complete: true, cost_units: cost })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub complete: usize,
    pub incomplete: usize,
    pub tau_mean: f64,
    pub tau_sd: f64,
    pub tau_max: usize,
}

/// Component-wise mean, standard deviation and `mean +/- 2 SE` intervals over
/// complete estimates. Incomplete estimates are only counted.
pub fn aggregate(estimates: &[RgEstimate]) -> Result<Aggregate> {
    let done: Vec<&RgEstimate> = estimates.iter().filter(|e| e.complete).collect();
    if done.len() < 2 {
        return Err(Error::NotEnoughData(format!("need at least two complete estimates, got {}", done.len())));
    }
    let r = done.len() as f64;
    let dim = done[0].h.len();
    let mut mean = vec![0.0; dim];
    for e in &done {
        add_scaled(&mut mean, &e.h, 1.0 / r);
    }
    let mut sd = vec![0.0; dim];
    for e in &done {
        for i in 0..dim {
            sd[i] += (e.h[i] - mean[i]).powi(2) / (r - 1.0);
        }
    }
    sd.iter_mut().for_each(|v| *v = v.sqrt());
    let se: Vec<f64> = sd.iter().map(|s| s / r.sqrt()).collect();
    let taus: Vec<f64> = done.iter().filter_map(|e| e.tau.map(|t| t as f64)).collect();
    let (tau_mean, tau_sd) = if taus.len() >= 2 {
        (crate::stats::mean(&taus), crate::stats::variance(&taus).sqrt())
    } else {
        (taus.first().copied().unwrap_or(f64::NAN), f64::NAN)
    };
    Ok(Aggregate {
        ci_low: mean.iter().zip(&se).map(|(m, s)| m - 2.0 * s).collect(),
        ci_high: mean.iter().zip(&se).map(|(m, s)| m + 2.0 * s).collect(),
        mean,
        sd,
        se,
        complete: done.len(),
        incomplete: estimates.len() - done.len(),
        tau_mean,
        tau_sd,
        tau_max: done.iter().filter_map(|e| e.tau).max().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::coupled_cpf;
    use crate::models::{simulate, HiddenAr};

    fn toy() -> (HiddenAr, Parameter, ObservationSeries) {
        let m = HiddenAr::new(1).unwrap();
        let th = Parameter::scalar(0.5).unwrap();
        let y = simulate(&m, &th, 10, SeedKey::new(42)).unwrap().observations;
        (m, th, y)
    }

    #[test]
    fn weights() {
        assert_eq!(truncated_weight(&TruncationPolicy::Geometric(0.0), 7), 1.0);
        assert_eq!(truncated_weight(&TruncationPolicy::None, 7), 1.0);
        let w = truncated_weight(&TruncationPolicy::Geometric(0.025), 2);
        assert!((w - 1.0 / (0.975f64 * 0.975)).abs() < 1e-14);
        assert!((w - 1.051_939_513_477_975).abs() < 1e-12);
        assert!(TruncationPolicy::Geometric(1.0).validate().is_err());
    }

    #[test]
    fn aggregate_examples() {
        let mk = |v: f64| RgEstimate { h: vec![v], tau: Some(3), iterations_run: 3, complete: true, cost_units: 0 };
        let a = aggregate(&[mk(1.0), mk(2.0), mk(3.0), mk(4.0)]).unwrap();
        assert_eq!(a.mean, vec![2.5]);
        assert!((a.sd[0] - 1.290_994_448_735_805_6).abs() < 1e-12);
        let same = aggregate(&[mk(1.5), mk(1.5), mk(1.5)]).unwrap();
        assert_eq!(same.se, vec![0.0]);
        assert_eq!(same.ci_low, same.ci_high);
        let mut bad = mk(9.0);
        bad.complete = false;
        assert!(aggregate(&[mk(1.0), bad.clone()]).is_err());
        assert_eq!(aggregate(&[mk(1.0), mk(2.0), bad]).unwrap().incomplete, 1);
    }

    #[test]
    fn test_function_ids() {
        for h in [TestFunction::MeanPerTime, TestFunction::SecondMomentPerTime] {
            assert_eq!(h.name().parse::<TestFunction>().unwrap(), h);
        }
        assert!("identity".parse::<TestFunction>().is_err());
    }

    #[test]
    fn rejects_transport_and_tiny_n() {
        let (m, th, y) = toy();
        let mut o = RgOptions::new(16);
        o.scheme = Scheme::Transport;
        assert!(matches!(rg_estimate(&m, &th, &y, &o, SeedKey::new(1)), Err(Error::Unsupported(_))));
        let o = RgOptions::new(1);
        assert!(rg_estimate(&m, &th, &y, &o, SeedKey::new(1)).is_err());
    }

    #[test]
    fn meets_and_is_finite() {
        let (m, th, y) = toy();
        for rb in [false, true] {
            let o = RgOptions { rao_blackwell: rb, ..RgOptions::new(32) };
            let e = rg_estimate(&m, &th, &y, &o, SeedKey::new(3)).unwrap();
            assert!(e.complete);
            assert!(e.tau.unwrap() >= 2);
            assert!(e.h.iter().all(|v| v.is_finite()));
            assert_eq!(e.h.len(), 11);
        }
    }

    #[test]
    fn deterministic_given_key() {
        let (m, th, y) = toy();
        let o = RgOptions::new(16);
        assert_eq!(rg_estimate(&m, &th, &y, &o, SeedKey::new(5)).unwrap(), rg_estimate(&m, &th, &y, &o, SeedKey::new(5)).unwrap());
    }

    #[test]
    fn truncation_past_meeting_returns_chain_state() {
        let (m, th, y) = toy();
        let plain = rg_estimate(&m, &th, &y, &RgOptions::new(32), SeedKey::new(8)).unwrap();
        let tau = plain.tau.unwrap();
        let late = RgOptions { policy: TruncationPolicy::FixedM(tau + 3), ..RgOptions::new(32) };
        let e = rg_estimate(&m, &th, &y, &late, SeedKey::new(8)).unwrap();
        assert_eq!(e.iterations_run, tau + 3);
        // Same meeting, and H is a single chain evaluation: a value the chain visits.
        assert_eq!(e.tau, Some(tau));
        let zero = RgOptions { policy: TruncationPolicy::FixedM(0), ..RgOptions::new(32) };
        assert_eq!(rg_estimate(&m, &th, &y, &zero, SeedKey::new(8)).unwrap().h, plain.h);
    }

    #[test]
    fn geometric_zero_matches_plain() {
        let (m, th, y) = toy();
        let plain = rg_estimate(&m, &th, &y, &RgOptions::new(32), SeedKey::new(9)).unwrap();
        let g = RgOptions { policy: TruncationPolicy::Geometric(0.0), ..RgOptions::new(32) };
        assert_eq!(rg_estimate(&m, &th, &y, &g, SeedKey::new(9)).unwrap(), plain);
    }

    #[test]
    fn met_chains_stay_met() {
        let (m, th, y) = toy();
        let x = initial(&m, &th, &y, &RgOptions::new(16), SeedKey::new(1)).unwrap().trajectory;
        let mut pair = (x.clone(), x);
        for k in 0..3 {
            let (a, b) = coupled_cpf(&m, &th, &y, 16, &pair.0, &pair.1, &CpfOptions::default(), SeedKey::new(100 + k)).unwrap();
            assert!(a.trajectory.same_as(&b.trajectory));
            pair = (a.trajectory, b.trajectory);
        }
    }

    #[test]
    fn cap_flags_incomplete() {
        let (m, th, y) = toy();
        let o = RgOptions { max_iterations: 2, scheme: Scheme::Independent, ..RgOptions::new(64) };
        let e = rg_estimate(&m, &th, &y, &o, SeedKey::new(4)).unwrap();
        assert_eq!(e.iterations_run, 2);
        assert_eq!(e.complete, e.tau == Some(2));
    }
}
