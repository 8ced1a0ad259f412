//! State-space models written as deterministic functions of standard normal
//! noise blocks: `x0 = M(u0, theta)`, `x_t = F(x_{t-1}, u_t, theta, t)`, and
//! a measurement log-density `log g(y_t | x_t, theta)`.

mod growth;
mod hidden_ar;
mod plankton;
mod unlikely;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use growth::GrowthModel;
pub use hidden_ar::HiddenAr;
pub use plankton::{plankton_step, rk4_substep, PlanktonModel, PLANKTON_SUBSTEP};
pub use unlikely::UnlikelyObservation;

use crate::error::{check_len, Error, Result};
use crate::rng::{fill_normals, Role, SeedKey};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Static description of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub d_x: usize,
    pub d_y: usize,
    pub d_theta: usize,
    /// Length of the standard normal block consumed by `init_state`.
    pub init_noise_dim: usize,
    /// Length of the block consumed by one `propagate` call.
    pub prop_noise_dim: usize,
    /// Length of the block consumed by the measurement sampler in `simulate`.
    pub obs_noise_dim: usize,
    pub has_transition_density: bool,
}

/// A parameter vector in model units. Entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter(Vec<f64>);

impl Parameter {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite entry in {values:?}"
            )));
        }
        Ok(Parameter(values))
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Parameter::new(vec![value])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Copy with component `index` shifted by `delta`.
    pub fn shifted(&self, index: usize, delta: f64) -> Result<Self> {
        let mut v = self.0.clone();
        let slot = v.get_mut(index).ok_or_else(|| {
            Error::InvalidParameter(format!("component {index} out of range"))
        })?;
        *slot += delta;
        Parameter::new(v)
    }
}

impl std::ops::Index<usize> for Parameter {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Observations `y_1, ..., y_T`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    d_y: usize,
    data: Vec<f64>,
}

impl ObservationSeries {
    pub fn new(d_y: usize, data: Vec<f64>) -> Result<Self> {
        if d_y == 0 || data.is_empty() || !data.len().is_multiple_of(d_y) {
            return Err(Error::Dimension {
                what: "observation series",
                expected: d_y.max(1),
                got: data.len(),
            });
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("missing observation".into()));
        }
        Ok(ObservationSeries { d_y, data })
    }

    /// Horizon `T`.
    pub fn len(&self) -> usize {
        self.data.len() / self.d_y
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn d_y(&self) -> usize {
        self.d_y
    }

    /// Observation at time `t` in `1..=T`.
    pub fn at(&self, t: usize) -> &[f64] {
        assert!(t >= 1 && t <= self.len(), "observation time {t} out of range");
        &self.data[(t - 1) * self.d_y..t * self.d_y]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// CSV with header `y1,...,y{d_y}` and one row per time step.
    pub fn to_csv(&self) -> String {
        let header: Vec<String> = (1..=self.d_y).map(|j| format!("y{j}")).collect();
        let mut out = header.join(",");
        out.push('\n');
        for row in self.data.chunks(self.d_y) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::NotEnoughData("empty observation file".into()))?;
        let d_y = header.split(',').count();
        for (j, name) in header.split(',').enumerate() {
            if name.trim() != format!("y{}", j + 1) {
                return Err(Error::InvalidParameter(format!(
                    "unexpected column '{}' (expected y{})",
                    name.trim(),
                    j + 1
                )));
            }
        }
        let mut data = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            check_len("observation row", d_y, cells.len())?;
            for c in cells {
                let v: f64 = c.trim().parse().map_err(|_| {
                    Error::InvalidParameter(format!("row {}: cannot parse '{c}'", i + 1))
                })?;
                data.push(v);
            }
        }
        ObservationSeries::new(d_y, data)
    }
}

/// A state-space model. All methods are pure.
///
/// Time indices: `propagate(.., t, ..)` maps `x_{t-1}` to `x_t`, and
/// `log_measurement(.., t)` evaluates `g(y_t | x_t)` for `t >= 1`.
pub trait StateSpaceModel: Send + Sync + fmt::Debug {
    fn id(&self) -> &'static str;

    fn spec(&self) -> &ModelSpec;

    /// Model-specific domain checks (length, positivity of rates, ...).
    fn check_parameter(&self, theta: &Parameter) -> Result<()> {
        check_len("parameter", self.spec().d_theta, theta.len())
    }

    /// Parameter used by the harness when none is given.
    fn default_parameter(&self) -> Parameter;

    fn init_into(&self, u: &[f64], theta: &Parameter, out: &mut [f64]) -> Result<()>;

    fn propagate_into(
        &self,
        x: &[f64],
        u: &[f64],
        theta: &Parameter,
        t: usize,
        out: &mut [f64],
    ) -> Result<()>;

    /// Log measurement density; `-inf` is allowed.
    fn log_measurement(&self, y: &[f64], x: &[f64], theta: &Parameter, t: usize) -> f64;

    fn log_transition(
        &self,
        _x: &[f64],
        _x_next: &[f64],
        _theta: &Parameter,
        _t: usize,
    ) -> Result<f64> {
        Err(Error::Unsupported(format!(
            "model '{}' has no tractable transition density",
            self.id()
        )))
    }

    /// Draw `y_t` given `x_t` from a standard normal block of length `obs_noise_dim`.
    fn sample_observation(
        &self,
        x: &[f64],
        u: &[f64],
        theta: &Parameter,
        t: usize,
        out: &mut [f64],
    ) -> Result<()>;

    /// Upper bound on the measurement density, if one exists.
    fn measurement_bound(&self, _theta: &Parameter) -> Option<f64> {
        None
    }

    fn init_state(&self, u: &[f64], theta: &Parameter) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.spec().d_x];
        self.init_into(u, theta, &mut out)?;
        Ok(out)
    }

    fn propagate(&self, x: &[f64], u: &[f64], theta: &Parameter, t: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.spec().d_x];
        self.propagate_into(x, u, theta, t, &mut out)?;
        Ok(out)
    }
}

pub(crate) fn check_io(
    spec: &ModelSpec,
    x: &[f64],
    u: &[f64],
    noise_dim: usize,
    out: &[f64],
) -> Result<()> {
    check_len("state", spec.d_x, x.len())?;
    check_len("noise block", noise_dim, u.len())?;
    check_len("output state", spec.d_x, out.len())
}

pub(crate) fn finite_or_blowup(out: &[f64], t: usize) -> Result<()> {
    if out.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::ModelBlowUp { time: t })
    }
}

/// Compiled-in model identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    HiddenAr,
    UnlikelyObs,
    Growth,
    Plankton,
}

impl ModelId {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::HiddenAr => "hidden-ar",
            ModelId::UnlikelyObs => "unlikely-obs",
            ModelId::Growth => "growth",
            ModelId::Plankton => "plankton",
        }
    }

    /// Instantiate. `dim` is the hidden-AR dimension; `horizon` the
    /// observation time of the unlikely-observation model.
    pub fn build(self, dim: usize, horizon: usize) -> Result<Arc<dyn StateSpaceModel>> {
        Ok(match self {
            ModelId::HiddenAr => Arc::new(HiddenAr::new(dim)?),
            ModelId::UnlikelyObs => Arc::new(UnlikelyObservation::new(horizon)?),
            ModelId::Growth => Arc::new(GrowthModel::new()),
            ModelId::Plankton => Arc::new(PlanktonModel::new()),
        })
    }
}

impl FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hidden-ar" => Ok(ModelId::HiddenAr),
            "unlikely-obs" => Ok(ModelId::UnlikelyObs),
            "growth" => Ok(ModelId::Growth),
            "plankton" => Ok(ModelId::Plankton),
            other => Err(Error::InvalidParameter(format!("unknown model id '{other}'"))),
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A simulated path: states `x_0..x_T` (row-major, `(T+1) x d_x`) and observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub states: Vec<f64>,
    pub observations: ObservationSeries,
}

/// Simulate with noise blocks supplied by `noise(role, t, n)`.
pub fn simulate_with<F>(
    model: &dyn StateSpaceModel,
    theta: &Parameter,
    horizon: usize,
    mut noise: F,
) -> Result<SimulatedPath>
where
    F: FnMut(Role, usize, usize) -> Vec<f64>,
{
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    model.check_parameter(theta)?;
    let spec = model.spec().clone();
    let mut states = Vec::with_capacity((horizon + 1) * spec.d_x);
    let mut obs = Vec::with_capacity(horizon * spec.d_y);
    let x0 = model.init_state(&noise(Role::Init, 0, spec.init_noise_dim), theta)?;
    states.extend_from_slice(&x0);
    let mut x = x0;
    let mut y = vec![0.0; spec.d_y];
    for t in 1..=horizon {
        let u = noise(Role::Propagate, t, spec.prop_noise_dim);
        x = model.propagate(&x, &u, theta, t)?;
        states.extend_from_slice(&x);
        let v = noise(Role::Measure, t, spec.obs_noise_dim);
        model.sample_observation(&x, &v, theta, t, &mut y)?;
        obs.extend_from_slice(&y);
    }
    Ok(SimulatedPath {
        states,
        observations: ObservationSeries::new(spec.d_y, obs)?,
    })
}

/// Simulate a path, reproducible given `key`.
pub fn simulate(
    model: &dyn StateSpaceModel,
    theta: &Parameter,
    horizon: usize,
    key: SeedKey,
) -> Result<SimulatedPath> {
    simulate_with(model, theta, horizon, |role, t, n| {
        let mut v = vec![0.0; n];
        fill_normals(key.role(role).time(t as u64), &mut v);
        v
    })
}
