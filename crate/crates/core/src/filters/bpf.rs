use std::sync::Arc;

use super::{FilterTrace, NoiseBlocks, Runner};
use crate::error::{check_len, Error, Result};
use crate::models::{ObservationSeries, Parameter, StateSpaceModel};
use crate::resampling::{
    build_coupling, multinomial_from_uniforms, sorted_resample, CloudPair, Scheme, SortedDraw,
    TransportParams,
};
use crate::rng::{normal_cdf, stream, Role, SeedKey};

/// Salt of the stream used for joint or conditional ancestor draws.
const COUPLING_SALT: u64 = 0xc0_u64;

/// Bootstrap particle filter with multinomial resampling. The run is a
/// deterministic function of `(theta, key)`.
pub fn bootstrap_pf(
    model: &dyn StateSpaceModel,
    theta: &Parameter,
    y: &ObservationSeries,
    n: usize,
    key: SeedKey,
) -> Result<FilterTrace> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one particle".into()));
    }
    let noise = NoiseBlocks::draw(model.spec(), n, y.len(), key);
    bpf_from_noise(model, theta, y, Arc::new(noise))
}

/// Bootstrap filter driven entirely by the given noise: multinomial
/// ancestors come from `Phi` of the resampling normals.
pub fn bpf_from_noise(
    model: &dyn StateSpaceModel,
    theta: &Parameter,
    y: &ObservationSeries,
    noise: Arc<NoiseBlocks>,
) -> Result<FilterTrace> {
    let mut run = Runner::start(model, theta, y, noise, None)?;
    while !run.done() {
        let a = noise_multinomial(&run);
        run.advance(a)?;
    }
    Ok(run.finish())
}

fn noise_multinomial(run: &Runner<'_>) -> Vec<usize> {
    let z = &run.noise().resample[run.time()];
    let u: Vec<f64> = z[1..].iter().map(|&v| normal_cdf(v)).collect();
    multinomial_from_uniforms(run.weights(), &u)
}

fn noise_sorted(run: &Runner<'_>, d_x: usize) -> Vec<usize> {
    let z = &run.noise().resample[run.time()];
    sorted_resample(run.states(), run.weights(), d_x, &SortedDraw::from_normals(z, run.weights().len()))
}

/// Recompute the log-likelihood increments of a trace from its parameter,
/// noise and ancestors.
pub fn replay(model: &dyn StateSpaceModel, y: &ObservationSeries, trace: &FilterTrace) -> Result<Vec<f64>> {
    check_len("trace horizon", y.len(), trace.horizon())?;
    let mut run = Runner::start(model, &trace.theta, y, trace.noise.clone(), None)?;
    for a in &trace.ancestors {
        run.advance(a.clone())?;
    }
    Ok(run.finish().loglik_increments)
}

/// Two bootstrap filters at `theta` and `theta_tilde` sharing all
/// process-generating variables, with ancestors drawn jointly from the coupling
/// of `scheme` at every step.
#[allow(clippy::too_many_arguments)]
pub fn coupled_bpf(
    model: &dyn StateSpaceModel,
    theta: &Parameter,
    theta_tilde: &Parameter,
    y: &ObservationSeries,
    n: usize,
    scheme: Scheme,
    params: &TransportParams,
    key: SeedKey,
) -> Result<(FilterTrace, FilterTrace)> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one particle".into()));
    }
    params.validate()?;
    let d_x = model.spec().d_x;
    let noise = Arc::new(NoiseBlocks::draw(model.spec(), n, y.len(), key));
    let mut rng = stream(key.role(Role::Resample).derive(COUPLING_SALT));
    let mut one = Runner::start(model, theta, y, noise.clone(), None)?;
    let mut two = Runner::start(model, theta_tilde, y, noise, None)?;
    while !one.done() {
        let coupling = build_coupling(
            scheme,
            params,
            CloudPair { x: one.states(), w: one.weights(), x_tilde: two.states(), w_tilde: two.weights(), d: d_x },
        )?;
        let pairs = coupling.sample_pairs(n, &mut rng);
        one.advance(pairs.a)?;
        two.advance(pairs.a_tilde)?;
    }
    Ok((one.finish(), two.finish()))
}

/// Run a filter at `theta_tilde` with noise `noise_tilde`, resampling at each
/// step conditionally on the ancestors stored in `trace`.
///
/// Independent and sorted schemes resample the new system from its own noise,
/// so the result is a deterministic function of `(theta_tilde, noise_tilde)`.
/// The other schemes draw from the conditional rows of their coupling matrix.
#[allow(clippy::too_many_arguments)]
pub fn conditional_rerun(
    model: &dyn StateSpaceModel,
    y: &ObservationSeries,
    trace: &FilterTrace,
    theta_tilde: &Parameter,
    noise_tilde: Arc<NoiseBlocks>,
    scheme: Scheme,
    params: &TransportParams,
    key: SeedKey,
) -> Result<FilterTrace> {
    check_len("trace horizon", y.len(), trace.horizon())?;
    check_len("noise particles", trace.n, noise_tilde.n)?;
    if scheme == Scheme::CommonSystematic {
        return Err(Error::Unsupported("common systematic resampling has no conditional kernel".into()));
    }
    params.validate()?;
    let d_x = model.spec().d_x;
    let mut rng = stream(key.role(Role::Resample).derive(COUPLING_SALT));
    let mut run = Runner::start(model, theta_tilde, y, noise_tilde, None)?;
    while !run.done() {
        let t = run.time();
        let a_tilde = match scheme {
            Scheme::Independent => noise_multinomial(&run),
            Scheme::Sorted => noise_sorted(&run, d_x),
            _ => {
                let w = trace.weights(t);
                let coupling = build_coupling(
                    scheme,
                    params,
                    CloudPair { x: &trace.states[t], w: &w, x_tilde: run.states(), w_tilde: run.weights(), d: d_x },
                )?;
                coupling.conditional_sample(&trace.ancestors[t], &mut rng)?
            }
        };
        run.advance(a_tilde)?;
    }
    Ok(run.finish())
}
