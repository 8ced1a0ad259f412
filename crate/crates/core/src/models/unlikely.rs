use super::{check_io, finite_or_blowup, ModelSpec, Parameter, StateSpaceModel, LN_2PI};
use crate::error::{check_len, Error, Result};

/// Scalar auto-regressive model observed once, at the final time:
/// `x0 ~ N(0, tau0^2)`, `x_t = eta x_{t-1} + N(0, tau^2)`, `y_T ~ N(x_T, sigma^2)`.
///
/// Parameter layout: `(tau0, eta, tau, sigma)`.
#[derive(Debug, Clone)]
pub struct UnlikelyObservation {
    spec: ModelSpec,
    horizon: usize,
}

impl UnlikelyObservation {
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be >= 1".into()));
        }
        Ok(UnlikelyObservation {
            spec: ModelSpec {
                d_x: 1,
                d_y: 1,
                d_theta: 4,
                init_noise_dim: 1,
                prop_noise_dim: 1,
                obs_noise_dim: 1,
                has_transition_density: true,
            },
            horizon,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

impl StateSpaceModel for UnlikelyObservation {
    fn id(&self) -> &'static str {
        "unlikely-obs"
    }

    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn check_parameter(&self, theta: &Parameter) -> Result<()> {
        check_len("parameter", 4, theta.len())?;
        let v = theta.values();
        if v[0] <= 0.0 || v[2] <= 0.0 || v[3] <= 0.0 {
            return Err(Error::InvalidParameter(
                "tau0, tau and sigma must be positive".into(),
            ));
        }
        Ok(())
    }

    fn default_parameter(&self) -> Parameter {
        Parameter::new(vec![0.1, 0.9, 0.1, 0.1]).expect("finite")
    }

    fn init_into(&self, u: &[f64], theta: &Parameter, out: &mut [f64]) -> Result<()> {
        check_len("init noise block", 1, u.len())?;
        check_len("output state", 1, out.len())?;
        out[0] = theta[0] * u[0];
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
        out[0] = theta[1] * x[0] + theta[2] * u[0];
        finite_or_blowup(out, t)
    }

    /// Zero (log of 1) at every time except the horizon.
    fn log_measurement(&self, y: &[f64], x: &[f64], theta: &Parameter, t: usize) -> f64 {
        if t != self.horizon {
            return 0.0;
        }
        let s = theta[3];
        let z = (y[0] - x[0]) / s;
        -0.5 * LN_2PI - s.ln() - 0.5 * z * z
    }

    fn log_transition(&self, x: &[f64], x_next: &[f64], theta: &Parameter, _t: usize) -> Result<f64> {
        check_len("state", 1, x.len())?;
        check_len("state", 1, x_next.len())?;
        let s = theta[2];
        let z = (x_next[0] - theta[1] * x[0]) / s;
        Ok(-0.5 * LN_2PI - s.ln() - 0.5 * z * z)
    }

    fn sample_observation(
        &self,
        x: &[f64],
        u: &[f64],
        theta: &Parameter,
        _t: usize,
        out: &mut [f64],
    ) -> Result<()> {
        check_io(&self.spec, x, u, 1, out)?;
        out[0] = x[0] + theta[3] * u[0];
        Ok(())
    }

    fn measurement_bound(&self, theta: &Parameter) -> Option<f64> {
        Some(1.0_f64.max(1.0 / (theta[3] * (2.0 * std::f64::consts::PI).sqrt())))
    }
}
