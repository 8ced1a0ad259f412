use super::{check_io, finite_or_blowup, ModelSpec, Parameter, StateSpaceModel, LN_2PI};
use crate::error::{check_len, Error, Result};

/// Fixed RK4 substep, in days.
pub const PLANKTON_SUBSTEP: f64 = 0.01;

const OBS_SD: f64 = 0.2;

/// Phytoplankton-zooplankton model. The state `(p, z)` follows a
/// Lotka-Volterra system over each day,
///
/// ```text
/// dp/dt = alpha p - c p z
/// dz/dt = e c p z - m_l z - m_q z^2
/// ```
///
/// with a daily growth rate `alpha ~ N(mu_alpha, sigma_alpha^2)` held constant
/// within the day. `log p0, log z0 ~ N(log 2, 1)` and `log y_t ~ N(log p_t, 0.2^2)`.
///
/// Parameter layout: `(mu_alpha, sigma_alpha, c, e, m_l, m_q)`.
#[derive(Debug, Clone)]
pub struct PlanktonModel {
    spec: ModelSpec,
}

impl Default for PlanktonModel {
    fn default() -> Self {
        Self::new()
    }
}

impl PlanktonModel {
    pub fn new() -> Self {
        PlanktonModel {
            spec: ModelSpec {
                d_x: 2,
                d_y: 1,
                d_theta: 6,
                init_noise_dim: 2,
                prop_noise_dim: 1,
                obs_noise_dim: 1,
                has_transition_density: false,
            },
        }
    }
}

#[inline]
fn vector_field(p: f64, z: f64, alpha: f64, th: &[f64]) -> (f64, f64) {
    let (c, e, ml, mq) = (th[2], th[3], th[4], th[5]);
    (alpha * p - c * p * z, e * c * p * z - ml * z - mq * z * z)
}

/// One classical RK4 step of length `h`.
pub fn rk4_substep(p: f64, z: f64, alpha: f64, theta: &Parameter, h: f64) -> (f64, f64) {
    let th = theta.values();
    let (k1p, k1z) = vector_field(p, z, alpha, th);
    let (k2p, k2z) = vector_field(p + 0.5 * h * k1p, z + 0.5 * h * k1z, alpha, th);
    let (k3p, k3z) = vector_field(p + 0.5 * h * k2p, z + 0.5 * h * k2z, alpha, th);
    let (k4p, k4z) = vector_field(p + h * k3p, z + h * k3z, alpha, th);
    (
        p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
        z + h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z),
    )
}

/// Integrate one day with fixed RK4 substeps of (about) `dt`.
pub fn plankton_step(p: f64, z: f64, alpha: f64, theta: &Parameter, dt: f64) -> Result<(f64, f64)> {
    if p < 0.0 || z < 0.0 || dt <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "plankton_step needs p, z >= 0 and dt > 0 (p={p}, z={z}, dt={dt})"
        )));
    }
    check_len("parameter", 6, theta.len())?;
    let steps = ((1.0 / dt).round() as usize).max(1);
    let h = 1.0 / steps as f64;
    let (mut p, mut z) = (p, z);
    for _ in 0..steps {
        (p, z) = rk4_substep(p, z, alpha, theta, h);
    }
    if p.is_finite() && z.is_finite() {
        Ok((p, z))
    } else {
        Err(Error::ModelBlowUp { time: 0 })
    }
}

impl StateSpaceModel for PlanktonModel {
    fn id(&self) -> &'static str {
        "plankton"
    }

    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn check_parameter(&self, theta: &Parameter) -> Result<()> {
        check_len("parameter", 6, theta.len())?;
        if theta.values()[1..].iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter(
                "sigma_alpha, c, e, m_l, m_q must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn default_parameter(&self) -> Parameter {
        Parameter::new(vec![0.7, 0.5, 0.25, 0.3, 0.1, 0.1]).expect("finite")
    }

    fn init_into(&self, u: &[f64], _theta: &Parameter, out: &mut [f64]) -> Result<()> {
        check_len("init noise block", 2, u.len())?;
        check_len("output state", 2, out.len())?;
        out[0] = 2.0 * u[0].exp();
        out[1] = 2.0 * u[1].exp();
        Ok(())
    }

    fn propagate_into(
        &self,
        x: &[f64],
        u: &[f64],
        theta: &Parameter,
        t: usize,
        out: &mut [f64],
    ) -> Result<()> {
        check_io(&self.spec, x, u, 1, out)?;
        let alpha = theta[0] + theta[1] * u[0];
        let (p, z) = plankton_step(x[0].max(0.0), x[1].max(0.0), alpha, theta, PLANKTON_SUBSTEP)
            .map_err(|e| match e {
                Error::ModelBlowUp { .. } => Error::ModelBlowUp { time: t },
                other => other,
            })?;
        out[0] = p;
        out[1] = z;
        finite_or_blowup(out, t)
    }

    fn log_measurement(&self, y: &[f64], x: &[f64], _theta: &Parameter, _t: usize) -> f64 {
        if x[0] <= 0.0 || y[0] <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let ly = y[0].ln();
        let z = (ly - x[0].ln()) / OBS_SD;
        -0.5 * LN_2PI - OBS_SD.ln() - 0.5 * z * z - ly
    }

    fn sample_observation(
        &self,
        x: &[f64],
        u: &[f64],
        _theta: &Parameter,
        _t: usize,
        out: &mut [f64],
    ) -> Result<()> {
        check_len("state", 2, x.len())?;
        check_len("observation noise block", 1, u.len())?;
        check_len("observation", 1, out.len())?;
        out[0] = x[0] * (OBS_SD * u[0]).exp();
        Ok(())
    }
}
