use super::{check_io, finite_or_blowup, ModelSpec, Parameter, StateSpaceModel, LN_2PI};
use crate::error::{check_len, Error, Result};

/// Multivariate hidden auto-regressive model:
/// `x0 ~ N(0, I)`, `x_t ~ N(A x_{t-1}, I)` with `A_ij = theta^(|i-j|+1)`,
/// `y_t ~ N(x_t, I)`.
#[derive(Debug, Clone)]
pub struct HiddenAr {
    spec: ModelSpec,
}

impl HiddenAr {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("state dimension must be >= 1".into()));
        }
        Ok(HiddenAr {
            spec: ModelSpec {
                d_x: dim,
                d_y: dim,
                d_theta: 1,
                init_noise_dim: dim,
                prop_noise_dim: dim,
                obs_noise_dim: dim,
                has_transition_density: true,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.d_x
    }

    /// Dense transition matrix, row-major.
    pub fn transition_matrix(&self, theta: f64) -> Vec<f64> {
        let d = self.dim();
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = theta.powi((i.abs_diff(j) + 1) as i32);
            }
        }
        a
    }

    fn mean_into(&self, x: &[f64], theta: f64, out: &mut [f64]) {
        let d = self.dim();
        // powers[k] = theta^(k+1)
        let mut powers = [0.0f64; 16];
        let mut heap;
        let powers: &mut [f64] = if d <= 16 {
            &mut powers[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap[..]
        };
        let mut p = theta;
        for slot in powers.iter_mut() {
            *slot = p;
            p *= theta;
        }
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, xj) in x.iter().enumerate() {
                s += powers[i.abs_diff(j)] * xj;
            }
            *o = s;
        }
    }
}

impl StateSpaceModel for HiddenAr {
    fn id(&self) -> &'static str {
        "hidden-ar"
    }

    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn default_parameter(&self) -> Parameter {
        Parameter::scalar(0.4).expect("finite")
    }

    fn init_into(&self, u: &[f64], theta: &Parameter, out: &mut [f64]) -> Result<()> {
        check_len("parameter", 1, theta.len())?;
        check_len("init noise block", self.dim(), u.len())?;
        check_len("output state", self.dim(), out.len())?;
        out.copy_from_slice(u);
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
        check_io(&self.spec, x, u, self.dim(), out)?;
        self.mean_into(x, theta[0], out);
        for (o, e) in out.iter_mut().zip(u) {
            *o += e;
        }
        finite_or_blowup(out, t)
    }

    fn log_measurement(&self, y: &[f64], x: &[f64], _theta: &Parameter, _t: usize) -> f64 {
        debug_assert_eq!(y.len(), x.len());
        let q: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        -0.5 * (self.dim() as f64) * LN_2PI - 0.5 * q
    }

    fn log_transition(&self, x: &[f64], x_next: &[f64], theta: &Parameter, _t: usize) -> Result<f64> {
        check_len("state", self.dim(), x.len())?;
        check_len("state", self.dim(), x_next.len())?;
        let mut m = vec![0.0; self.dim()];
        self.mean_into(x, theta[0], &mut m);
        let q: f64 = x_next.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(-0.5 * (self.dim() as f64) * LN_2PI - 0.5 * q)
    }

    fn sample_observation(
        &self,
        x: &[f64],
        u: &[f64],
        _theta: &Parameter,
        _t: usize,
        out: &mut [f64],
    ) -> Result<()> {
        check_io(&self.spec, x, u, self.dim(), out)?;
        for ((o, a), e) in out.iter_mut().zip(x).zip(u) {
            *o = a + e;
        }
        Ok(())
    }

    fn measurement_bound(&self, _theta: &Parameter) -> Option<f64> {
        Some((-0.5 * self.dim() as f64 * LN_2PI).exp())
    }
}
