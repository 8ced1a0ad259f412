use std::sync::Arc;

use rand::Rng;

use super::{FilterTrace, NoiseBlocks, Runner, Trajectory};
use crate::error::{Error, Result};
use crate::models::{ObservationSeries, Parameter, StateSpaceModel};
use crate::resampling::{
    build_coupling, multinomial, CloudPair, IndexCoupling, Scheme, TransportParams, WeightVector,
};
use crate::rng::{stream, Role, SeedKey};

const CPF_SALT: u64 = 0xcf_u64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpfOptions {
    /// Redraw the pinned slot's ancestor with probability proportional to
    /// `w_t^k f(x_{t+1}^ref | x_t^k)`.
    pub ancestor_sampling: bool,
    /// Coupled resampling scheme of the coupled filter.
    pub scheme: Scheme,
    pub transport: TransportParams,
}

impl Default for CpfOptions {
    fn default() -> Self {
        CpfOptions { ancestor_sampling: false, scheme: Scheme::IndexCoupled, transport: TransportParams::default() }
    }
}

/// A sampled path together with the particle system that produced it.
#[derive(Debug, Clone)]
pub struct CpfOutput {
    pub trajectory: Trajectory,
    pub trace: FilterTrace,
    /// Index of the selected particle at time `T`.
    pub b: usize,
}

fn check_options(model: &dyn StateSpaceModel, n: usize, ancestor_sampling: bool) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one particle".into()));
    }
    if ancestor_sampling && !model.spec().has_transition_density {
        return Err(Error::Unsupported(format!(
            "ancestor sampling needs a transition density, which model '{}' lacks",
            model.id()
        )));
    }
    Ok(())
}

fn pinned_ancestor<R: Rng + ?Sized>(run: &Runner<'_>, ancestor_sampling: bool, rng: &mut R) -> Result<usize> {
    if !ancestor_sampling {
        return Ok(run.weights().len() - 1);
    }
    let (w, _) = WeightVector::from_log_weights(&run.ancestor_sampling_log_weights()?)?;
    Ok(w.cumulative().sample(rng))
}

fn output(trace: FilterTrace, b: usize, reference: &Trajectory) -> CpfOutput {
    if trace.degenerate {
        let last = trace.n - 1;
        return CpfOutput { trajectory: reference.clone(), trace, b: last };
    }
    CpfOutput { trajectory: trace.trajectory(b), trace, b }
}

/// Conditional particle filter: one Markov step from `reference`, leaving the
/// smoothing distribution invariant.
pub fn cpf(
    model: &dyn StateSpaceModel,
    theta: &Parameter,
    y: &ObservationSeries,
    n: usize,
    reference: &Trajectory,
    ancestor_sampling: bool,
    key: SeedKey,
) -> Result<CpfOutput> {
    check_options(model, n, ancestor_sampling)?;
    let noise = Arc::new(NoiseBlocks::draw(model.spec(), n, y.len(), key));
    let mut rng = stream(key.role(Role::Resample).derive(CPF_SALT));
    let mut run = Runner::start(model, theta, y, noise, Some(reference))?;
    while !run.done() {
        let mut a = multinomial(run.weights(), n - 1, &mut rng);
        a.push(pinned_ancestor(&run, ancestor_sampling, &mut rng)?);
        run.advance(a)?;
    }
    let b = run.weights().cumulative().sample(&mut rng);
    Ok(output(run.finish(), b, reference))
}

/// Coupled conditional particle filter: both systems share noise, are pinned
/// to their references, and resample jointly through `options.scheme`. With
/// ancestor sampling the pinned slots' ancestors are drawn from the maximal
/// coupling of the two ancestor-sampling distributions.
#[allow(clippy::too_many_arguments)]
pub fn coupled_cpf(
    model: &dyn StateSpaceModel,
    theta: &Parameter,
    y: &ObservationSeries,
    n: usize,
    reference: &Trajectory,
    reference_tilde: &Trajectory,
    options: &CpfOptions,
    key: SeedKey,
) -> Result<(CpfOutput, CpfOutput)> {
    check_options(model, n, options.ancestor_sampling)?;
    options.transport.validate()?;
    let d_x = model.spec().d_x;
    let noise = Arc::new(NoiseBlocks::draw(model.spec(), n, y.len(), key));
    let mut rng = stream(key.role(Role::Resample).derive(CPF_SALT));
    let mut one = Runner::start(model, theta, y, noise.clone(), Some(reference))?;
    let mut two = Runner::start(model, theta, y, noise, Some(reference_tilde))?;
    let pair_cloud = |one: &Runner<'_>, two: &Runner<'_>| {
        build_coupling(
            options.scheme,
            &options.transport,
            CloudPair { x: one.states(), w: one.weights(), x_tilde: two.states(), w_tilde: two.weights(), d: d_x },
        )
    };
    while !one.done() {
        let coupling = pair_cloud(&one, &two)?;
        let mut pairs = coupling.sample_pairs(n - 1, &mut rng);
        let (p, pt) = if options.ancestor_sampling {
            let (w, _) = WeightVector::from_log_weights(&one.ancestor_sampling_log_weights()?)?;
            let (wt, _) = WeightVector::from_log_weights(&two.ancestor_sampling_log_weights()?)?;
            if w == wt {
                let k = w.cumulative().sample(&mut rng);
                (k, k)
            } else {
                IndexCoupling::new(&w, &wt)?.sample_pair(&mut rng)
            }
        } else {
            (n - 1, n - 1)
        };
        pairs.a.push(p);
        pairs.a_tilde.push(pt);
        one.advance(pairs.a)?;
        two.advance(pairs.a_tilde)?;
    }
    let last = pair_cloud(&one, &two)?.sample_pairs(1, &mut rng);
    Ok((
        output(one.finish(), last.a[0], reference),
        output(two.finish(), last.a_tilde[0], reference_tilde),
    ))
}
