use super::{check_io, finite_or_blowup, ModelSpec, Parameter, StateSpaceModel, LN_2PI};
use crate::error::{check_len, Error, Result};

/// Nonlinear growth model:
/// `x0 ~ N(0, 2)`,
/// `x_t = 0.5 x + 25 x / (1 + x^2) + 8 cos(1.2 (t - 1)) + N(0, q)`,
/// `y_t ~ N(x_t^2 / 20, r)`.
///
/// Parameter layout: `(q, r)`, both variances.
#[derive(Debug, Clone)]
pub struct GrowthModel {
    spec: ModelSpec,
}

impl Default for GrowthModel {
    fn default() -> Self {
        Self::new()
    }
}

impl GrowthModel {
    pub fn new() -> Self {
        GrowthModel {
            spec: ModelSpec {
                d_x: 1,
                d_y: 1,
                d_theta: 2,
                init_noise_dim: 1,
                prop_noise_dim: 1,
                obs_noise_dim: 1,
                has_transition_density: true,
            },
        }
    }

    pub fn drift(x: f64, t: usize) -> f64 {
        0.5 * x + 25.0 * x / (1.0 + x * x) + 8.0 * (1.2 * (t as f64 - 1.0)).cos()
    }
}

fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln()) - 0.5 * (x - mean) * (x - mean) / var
}

impl StateSpaceModel for GrowthModel {
    fn id(&self) -> &'static str {
        "growth"
    }

    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn check_parameter(&self, theta: &Parameter) -> Result<()> {
        check_len("parameter", 2, theta.len())?;
        if theta[0] <= 0.0 || theta[1] <= 0.0 {
            return Err(Error::InvalidParameter("variances must be positive".into()));
        }
        Ok(())
    }

    fn default_parameter(&self) -> Parameter {
        Parameter::new(vec![1.0, 10.0]).expect("finite")
    }

    fn init_into(&self, u: &[f64], _theta: &Parameter, out: &mut [f64]) -> Result<()> {
        check_len("init noise block", 1, u.len())?;
        check_len("output state", 1, out.len())?;
        out[0] = std::f64::consts::SQRT_2 * u[0];
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
        out[0] = Self::drift(x[0], t) + theta[0].sqrt() * u[0];
        finite_or_blowup(out, t)
    }

    fn log_measurement(&self, y: &[f64], x: &[f64], theta: &Parameter, _t: usize) -> f64 {
        normal_logpdf(y[0], x[0] * x[0] / 20.0, theta[1])
    }

    fn log_transition(&self, x: &[f64], x_next: &[f64], theta: &Parameter, t: usize) -> Result<f64> {
        check_len("state", 1, x.len())?;
        check_len("state", 1, x_next.len())?;
        Ok(normal_logpdf(x_next[0], Self::drift(x[0], t), theta[0]))
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
        out[0] = x[0] * x[0] / 20.0 + theta[1].sqrt() * u[0];
        Ok(())
    }

    fn measurement_bound(&self, theta: &Parameter) -> Option<f64> {
        Some(1.0 / (2.0 * std::f64::consts::PI * theta[1]).sqrt())
    }
}
