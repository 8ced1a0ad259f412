use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::models::{HiddenAr, ObservationSeries, Parameter};

/// `x_0 ~ N(m0, P0)`, `x_t = A x_{t-1} + N(0, Q)`, `y_t = C x_t + N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianSpec {
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub m0: DVector<f64>,
    pub p0: DMatrix<f64>,
    /// Times at which `y_t` is observed; `None` means every time.
    pub observation_times: Option<Vec<usize>>,
}

impl LinearGaussianSpec {
    pub fn d_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn d_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (dx, dy) = (self.d_x(), self.d_y());
        let square = |m: &DMatrix<f64>, d: usize, what: &'static str| -> Result<()> {
            check_len(what, d, m.nrows())?;
            check_len(what, d, m.ncols())
        };
        square(&self.a, dx, "A")?;
        square(&self.q, dx, "Q")?;
        square(&self.p0, dx, "P0")?;
        square(&self.r, dy, "R")?;
        check_len("C columns", dx, self.c.ncols())?;
        check_len("m0", dx, self.m0.len())?;
        for (m, name) in [(&self.q, "Q"), (&self.r, "R"), (&self.p0, "P0")] {
            check_psd(m, name)?;
        }
        Ok(())
    }

    /// The hidden auto-regressive model: `C = Q = R = P0 = I`, `m0 = 0`.
    pub fn hidden_ar(theta: f64, dim: usize) -> Result<Self> {
        let model = HiddenAr::new(dim)?;
        let a = DMatrix::from_row_slice(dim, dim, &model.transition_matrix(theta));
        let eye = DMatrix::identity(dim, dim);
        Ok(LinearGaussianSpec {
            a,
            q: eye.clone(),
            c: eye.clone(),
            r: eye.clone(),
            m0: DVector::zeros(dim),
            p0: eye,
            observation_times: None,
        })
    }

    /// The scalar model observed once at `horizon`, parameter `(tau0, eta, tau, sigma)`.
    pub fn unlikely_observation(theta: &Parameter, horizon: usize) -> Result<Self> {
        check_len("parameter", 4, theta.len())?;
        let v = theta.values();
        let s = |x: f64| DMatrix::from_element(1, 1, x);
        Ok(LinearGaussianSpec {
            a: s(v[1]),
            q: s(v[2] * v[2]),
            c: s(1.0),
            r: s(v[3] * v[3]),
            m0: DVector::zeros(1),
            p0: s(v[0] * v[0]),
            observation_times: Some(vec![horizon]),
        })
    }
}

fn check_psd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-10 * (1.0 + m.abs().max()) {
        return Err(Error::InvalidParameter(format!("{name} is not symmetric")));
    }
    let eig = m.clone().symmetric_eigenvalues();
    if eig.iter().any(|&l| l < -1e-12 * (1.0 + m.abs().max())) {
        return Err(Error::InvalidParameter(format!("{name} is not positive semi-definite")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct KalmanOutput {
    pub loglik: f64,
    /// Filtering means for `t = 0..T` (the `t = 0` entry is the prior).
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// One-step predictions for `t = 1..T`, stored at index `t - 1`.
    pub predicted_means: Vec<DVector<f64>>,
    pub predicted_covariances: Vec<DMatrix<f64>>,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

/// Exact log-likelihood and filtering moments.
pub fn kalman_loglik(spec: &LinearGaussianSpec, y: &ObservationSeries) -> Result<KalmanOutput> {
    spec.validate()?;
    check_len("observation dimension", spec.d_y(), y.d_y())?;
    let dy = spec.d_y();
    let mut m = spec.m0.clone();
    let mut p = spec.p0.clone();
    let mut out = KalmanOutput {
        loglik: 0.0,
        means: vec![m.clone()],
        covariances: vec![p.clone()],
        predicted_means: Vec::with_capacity(y.len()),
        predicted_covariances: Vec::with_capacity(y.len()),
    };
    let eye = DMatrix::<f64>::identity(spec.d_x(), spec.d_x());
    for t in 1..=y.len() {
        let m_pred = &spec.a * &m;
        let mut p_pred = &spec.a * &p * spec.a.transpose() + &spec.q;
        symmetrize(&mut p_pred);
        out.predicted_means.push(m_pred.clone());
        out.predicted_covariances.push(p_pred.clone());
        let yt = y.at(t);
        if !spec.observation_times.as_ref().is_none_or(|ts| ts.contains(&t)) {
            m = m_pred;
            p = p_pred;
        } else {
            let yv = DVector::from_column_slice(yt);
            let mut s = &spec.c * &p_pred * spec.c.transpose() + &spec.r;
            symmetrize(&mut s);
            let chol = Cholesky::new(s.clone()).ok_or_else(|| {
                Error::Numerical(format!("innovation covariance is not positive definite at t = {t}"))
            })?;
            let innov = &yv - &spec.c * &m_pred;
            let sol = chol.solve(&innov);
            let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            out.loglik += -0.5 * (dy as f64 * super::LN_2PI + log_det + innov.dot(&sol));
            // K = P C^T S^-1
            let gain = chol.solve(&(&spec.c * &p_pred)).transpose();
            m = &m_pred + &gain * innov;
            let i_kc = &eye - &gain * &spec.c;
            p = &i_kc * &p_pred * i_kc.transpose() + &gain * &spec.r * gain.transpose();
            symmetrize(&mut p);
        }
        out.means.push(m.clone());
        out.covariances.push(p.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SmootherOutput {
    /// Smoothing means and covariances for `t = 0..T`.
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
}

/// Rauch-Tung-Striebel backward pass.
pub fn kalman_smoother(spec: &LinearGaussianSpec, y: &ObservationSeries) -> Result<SmootherOutput> {
    let f = kalman_loglik(spec, y)?;
    let t_max = y.len();
    let mut means = f.means.clone();
    let mut covs = f.covariances.clone();
    for t in (0..t_max).rev() {
        let p_pred = &f.predicted_covariances[t];
        let inv = p_pred
            .clone()
            .try_inverse()
            .or_else(|| p_pred.clone().pseudo_inverse(1e-14).ok())
            .ok_or_else(|| Error::Numerical("predicted covariance is not invertible".into()))?;
        let g = &f.covariances[t] * spec.a.transpose() * inv;
        means[t] = &f.means[t] + &g * (&means[t + 1] - &f.predicted_means[t]);
        let mut c = &f.covariances[t] + &g * (&covs[t + 1] - p_pred) * g.transpose();
        symmetrize(&mut c);
        covs[t] = c;
    }
    Ok(SmootherOutput { means, covariances: covs })
}
