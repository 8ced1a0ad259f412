use rand::Rng;

use super::weights::{Cumulative, WeightVector};
use super::AncestorPairs;
use crate::error::{check_len, Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        Matrix { rows: r, cols: c, data: rows.concat() }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (acc, v) in s.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        s
    }
}

/// Squared Euclidean distances between two clouds stored row-major with `d` coordinates.
pub fn distance_matrix(x: &[f64], x_tilde: &[f64], d: usize) -> Result<Matrix> {
    if d == 0 || !x.len().is_multiple_of(d) || !x_tilde.len().is_multiple_of(d) {
        return Err(Error::Dimension {
            what: "particle cloud",
            expected: d,
            got: x.len() % d.max(1) + x_tilde.len() % d.max(1),
        });
    }
    let (n, m) = (x.len() / d, x_tilde.len() / d);
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        for j in 0..m {
            let xj = &x_tilde[j * d..(j + 1) * d];
            out.data[i * m + j] = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    }
    Ok(out)
}

/// Entropy-regularized transport settings. `epsilon = None` means
/// `epsilon_fraction * median(D)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportParams {
    pub epsilon: Option<f64>,
    pub epsilon_fraction: f64,
    pub alpha_target: f64,
    pub max_iter: usize,
}

impl Default for TransportParams {
    fn default() -> Self {
        TransportParams { epsilon: None, epsilon_fraction: 0.05, alpha_target: 0.95, max_iter: 1000 }
    }
}

impl TransportParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::InvalidParameter(format!("epsilon must be positive, got {e}")));
            }
        }
        if !(self.epsilon_fraction > 0.0 && self.epsilon_fraction.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon fraction must be positive, got {}",
                self.epsilon_fraction
            )));
        }
        if !(self.alpha_target > 0.0 && self.alpha_target <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha target must be in (0, 1], got {}",
                self.alpha_target
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// Regularization for a given distance matrix.
    pub fn epsilon_for(&self, dist: &Matrix) -> f64 {
        if let Some(e) = self.epsilon {
            return e;
        }
        let mut v = dist.data.clone();
        let mid = v.len() / 2;
        let median = if v.is_empty() {
            0.0
        } else {
            *v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1
        };
        if median > 0.0 {
            return self.epsilon_fraction * median;
        }
        let max = dist.data.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            self.epsilon_fraction * max
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornOutput {
    pub plan: Matrix,
    pub alpha: f64,
    pub iterations: usize,
}

/// Sinkhorn iterations on `K = exp(-D / epsilon)`, stopped once the smallest
/// marginal ratio reaches `alpha_target` or after `max_iter` sweeps.
pub fn sinkhorn(
    dist: &Matrix,
    w: &WeightVector,
    w_tilde: &WeightVector,
    epsilon: f64,
    alpha_target: f64,
    max_iter: usize,
) -> Result<SinkhornOutput> {
    let (n, m) = (dist.rows, dist.cols);
    check_len("w", n, w.len())?;
    check_len("w_tilde", m, w_tilde.len())?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    // Row-wise shift: a row scaling of K is absorbed by the left potential.
    let mut k = Matrix::zeros(n, m);
    for i in 0..n {
        let row = dist.row(i);
        let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
        for j in 0..m {
            k.data[i * m + j] = (-(row[j] - lo) / epsilon).exp();
        }
    }
    let w = w.as_slice();
    let wt = w_tilde.as_slice();
    let mut u = vec![0.0; n];
    let mut v = vec![1.0; m];
    let mut kv = mat_vec(&k, &v);
    let mut alpha = 0.0;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        for i in 0..n {
            u[i] = if w[i] > 0.0 { w[i] / kv[i] } else { 0.0 };
        }
        let ktu = mat_t_vec(&k, &u);
        for j in 0..m {
            if wt[j] > 0.0 {
                if ktu[j] <= 0.0 || !ktu[j].is_finite() {
                    return Err(Error::KernelUnderflow { epsilon });
                }
                v[j] = wt[j] / ktu[j];
            } else {
                v[j] = 0.0;
            }
        }
        kv = mat_vec(&k, &v);
        let mut ratio = f64::INFINITY;
        for i in 0..n {
            let row = u[i] * kv[i];
            if row > 0.0 {
                ratio = ratio.min(w[i] / row);
            }
        }
        alpha = ratio.min(1.0);
        if !alpha.is_finite() {
            return Err(Error::KernelUnderflow { epsilon });
        }
        if alpha >= alpha_target {
            break;
        }
    }
    let mut plan = k;
    for i in 0..n {
        for j in 0..m {
            plan.data[i * m + j] *= u[i] * v[j];
        }
    }
    if plan.data.iter().any(|p| !p.is_finite()) {
        return Err(Error::KernelUnderflow { epsilon });
    }
    Ok(SinkhornOutput { plan, alpha, iterations })
}

fn mat_vec(k: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..k.rows).map(|i| k.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn mat_t_vec(k: &Matrix, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; k.cols];
    for i in 0..k.rows {
        if u[i] == 0.0 {
            continue;
        }
        for (o, kij) in out.iter_mut().zip(k.row(i)) {
            *o += kij * u[i];
        }
    }
    out
}

/// Turn an approximate plan into an exact coupling of `w` and `w_tilde`:
/// `alpha * P_hat + (w - alpha u)(w_tilde - alpha u_tilde)^T / s`, with `u`,
/// `u_tilde` the margins of `P_hat` and `alpha` the largest value keeping the
/// residuals non-negative.
pub fn marginal_correction(
    plan: &Matrix,
    w: &WeightVector,
    w_tilde: &WeightVector,
) -> Result<(Matrix, f64)> {
    check_len("w", plan.rows, w.len())?;
    check_len("w_tilde", plan.cols, w_tilde.len())?;
    if plan.data.iter().any(|p| *p < 0.0 || !p.is_finite()) {
        return Err(Error::InvalidWeights("plan has negative or non-finite entries".into()));
    }
    let u = plan.row_sums();
    let ut = plan.col_sums();
    let mut alpha: f64 = 1.0;
    for (wi, ui) in w.as_slice().iter().zip(&u) {
        if *ui > 0.0 {
            alpha = alpha.min(wi / ui);
        }
    }
    for (wj, uj) in w_tilde.as_slice().iter().zip(&ut) {
        if *uj > 0.0 {
            alpha = alpha.min(wj / uj);
        }
    }
    let r: Vec<f64> = w.as_slice().iter().zip(&u).map(|(a, b)| (a - alpha * b).max(0.0)).collect();
    let rt: Vec<f64> =
        w_tilde.as_slice().iter().zip(&ut).map(|(a, b)| (a - alpha * b).max(0.0)).collect();
    let s = 0.5 * (r.iter().sum::<f64>() + rt.iter().sum::<f64>());
    let mut out = plan.clone();
    out.data.iter_mut().for_each(|p| *p *= alpha);
    if s > 1e-15 {
        for i in 0..out.rows {
            if r[i] == 0.0 {
                continue;
            }
            for j in 0..out.cols {
                out.data[i * out.cols + j] += r[i] * rt[j] / s;
            }
        }
    }
    Ok((out, alpha))
}

/// Corrected transport plan from the `(w, w_tilde)` direction.
pub fn transport_coupling(
    dist: &Matrix,
    w: &WeightVector,
    w_tilde: &WeightVector,
    params: &TransportParams,
) -> Result<CouplingMatrix> {
    params.validate()?;
    let eps = params.epsilon_for(dist);
    let out = sinkhorn(dist, w, w_tilde, eps, params.alpha_target, params.max_iter)?;
    let (p, _) = marginal_correction(&out.plan, w, w_tilde)?;
    CouplingMatrix::new(p, w.clone(), w_tilde.clone())
}

/// Average of the forward plan and the transposed reverse plan, which makes
/// the induced conditional kernel reversible.
pub fn symmetrized_transport(
    dist: &Matrix,
    w: &WeightVector,
    w_tilde: &WeightVector,
    params: &TransportParams,
) -> Result<CouplingMatrix> {
    params.validate()?;
    let eps = params.epsilon_for(dist);
    let fwd = sinkhorn(dist, w, w_tilde, eps, params.alpha_target, params.max_iter)?;
    let (p1, _) = marginal_correction(&fwd.plan, w, w_tilde)?;
    let dt = dist.transpose();
    let rev = sinkhorn(&dt, w_tilde, w, eps, params.alpha_target, params.max_iter)?;
    let (p2, _) = marginal_correction(&rev.plan, w_tilde, w)?;
    let p2t = p2.transpose();
    let mut p = p1;
    for (a, b) in p.data.iter_mut().zip(&p2t.data) {
        *a = 0.5 * (*a + b);
    }
    CouplingMatrix::new(p, w.clone(), w_tilde.clone())
}

/// A coupling given as an explicit matrix, with cached CDFs for sampling.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    pub p: Matrix,
    pub w: WeightVector,
    pub w_tilde: WeightVector,
    flat: Cumulative,
}

impl CouplingMatrix {
    pub fn new(p: Matrix, w: WeightVector, w_tilde: WeightVector) -> Result<Self> {
        check_len("coupling rows", w.len(), p.rows)?;
        check_len("coupling cols", w_tilde.len(), p.cols)?;
        let flat = Cumulative::new(&p.data);
        Ok(CouplingMatrix { p, w, w_tilde, flat })
    }

    /// Largest deviation of the margins from `(w, w_tilde)`.
    pub fn marginal_error(&self) -> f64 {
        let rows = self.p.row_sums();
        let cols = self.p.col_sums();
        rows.iter()
            .zip(self.w.as_slice())
            .chain(cols.iter().zip(self.w_tilde.as_slice()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sample_pairs<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> AncestorPairs {
        let m = self.p.cols;
        let (a, a_tilde) = (0..count)
            .map(|_| {
                let f = self.flat.sample(rng);
                (f / m, f % m)
            })
            .unzip();
        AncestorPairs { a, a_tilde }
    }

    /// Draw `a_tilde^k` from `P[a^k, .] / w[a^k]` for each `k`.
    pub fn conditional<R: Rng + ?Sized>(&self, a: &[usize], rng: &mut R) -> Result<Vec<usize>> {
        let mut rows: Vec<Option<Cumulative>> = vec![None; self.p.rows];
        a.iter()
            .map(|&i| {
                if i >= self.p.rows {
                    return Err(Error::Dimension { what: "ancestor", expected: self.p.rows, got: i });
                }
                let c = rows[i].get_or_insert_with(|| Cumulative::new(self.p.row(i)));
                if c.total() <= 0.0 {
                    return Err(Error::Inconsistent(format!("row {i} of the coupling has no mass")));
                }
                Ok(c.sample(rng))
            })
            .collect()
    }
}
