use std::collections::BTreeMap;

use crate::error::{check_len, Error, Result};
use crate::resampling::hilbert::{hilbert_order, BoundingBox};
use crate::resampling::{
    build_coupling, sorted_resample, CloudPair, Matrix, Scheme, SortedDraw, TransportParams,
    WeightVector,
};

const MAX_ENUMERATED: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct JointOutcome {
    pub a: Vec<usize>,
    pub a_tilde: Vec<usize>,
    pub probability: f64,
}

/// All `(k -> index)` assignments of length `len` over `0..n`.
fn vectors(n: usize, len: usize) -> Vec<Vec<usize>> {
    let total = n.pow(len as u32);
    (0..total)
        .map(|mut code| {
            let mut v = vec![0; len];
            for slot in v.iter_mut().rev() {
                *slot = code % n;
                code /= n;
            }
            v
        })
        .collect()
}

fn check_tiny(n: usize) -> Result<()> {
    if n == 0 || n > MAX_ENUMERATED {
        return Err(Error::Unsupported(format!(
            "exhaustive enumeration needs 1 <= N <= {MAX_ENUMERATED}, got {n}"
        )));
    }
    Ok(())
}

/// Exact law of `N` i.i.d. pairs drawn from `p`.
pub fn enumerate_coupling(p: &Matrix) -> Result<Vec<JointOutcome>> {
    let n = p.rows;
    check_tiny(n)?;
    check_len("coupling columns", n, p.cols)?;
    let all = vectors(n, n);
    let mut out = Vec::with_capacity(all.len() * all.len());
    for a in &all {
        for at in &all {
            let probability = a.iter().zip(at).map(|(&i, &j)| p.get(i, j)).product();
            out.push(JointOutcome { a: a.clone(), a_tilde: at.clone(), probability });
        }
    }
    Ok(out)
}

/// Exact law of the multinomial ancestor vector.
pub fn multinomial_law(w: &WeightVector) -> Result<BTreeMap<Vec<usize>, f64>> {
    let n = w.len();
    check_tiny(n)?;
    Ok(vectors(n, n).into_iter().map(|a| {
        let p = a.iter().map(|&i| w[i]).product();
        (a, p)
    }).collect())
}

fn factorial_perms(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in factorial_perms(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Exact law of the ancestor vector produced by sorted resampling of one
/// cloud: the systematic offset is integrated over the intervals on which
/// the output is constant, and every relabelling has equal mass.
pub fn sorted_law(x: &[f64], w: &WeightVector, d: usize) -> Result<BTreeMap<Vec<usize>, f64>> {
    let n = w.len();
    check_tiny(n)?;
    check_len("cloud", n * d, x.len())?;
    let order = hilbert_order(x, d, &BoundingBox::of_clouds(&[x], d));
    let mut cuts = vec![0.0, 1.0];
    let mut acc = 0.0;
    for &i in &order {
        acc += w[i];
        for k in 0..n {
            let u = n as f64 * acc - k as f64;
            if u > 0.0 && u < 1.0 {
                cuts.push(u);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let perms = factorial_perms(n);
    let mut law = BTreeMap::new();
    for span in cuts.windows(2) {
        let len = span[1] - span[0];
        if len <= 0.0 {
            continue;
        }
        let offset = 0.5 * (span[0] + span[1]);
        for perm in &perms {
            let draw = SortedDraw { offset, perm: perm.clone() };
            let a = sorted_resample(x, w, d, &draw);
            *law.entry(a).or_insert(0.0) += len / perms.len() as f64;
        }
    }
    Ok(law)
}

/// Largest `|r(a) c(a_tilde | a) - r(a_tilde) c'(a | a_tilde)|` over all ancestor
/// vectors, where `c'` is the kernel built with the two systems swapped.
pub fn detailed_balance_violation(
    scheme: Scheme,
    params: &TransportParams,
    pair: CloudPair<'_>,
) -> Result<f64> {
    let n = pair.w.len();
    check_tiny(n)?;
    match scheme {
        Scheme::CommonSystematic => Err(Error::Unsupported(
            "common systematic resampling has no conditional kernel".into(),
        )),
        Scheme::Sorted => {
            // The kernel resamples the second cloud on its own.
            let fwd_r = sorted_law(pair.x, pair.w, pair.d)?;
            let fwd_c = sorted_law(pair.x_tilde, pair.w_tilde, pair.d)?;
            let mut worst: f64 = 0.0;
            for (a, pa) in &fwd_r {
                for (at, pat) in &fwd_c {
                    let forward = pa * pat;
                    let reverse = fwd_c.get(at).copied().unwrap_or(0.0) * fwd_r.get(a).copied().unwrap_or(0.0);
                    worst = worst.max((forward - reverse).abs());
                }
            }
            Ok(worst)
        }
        _ => {
            let fwd = build_coupling(scheme, params, pair)?
                .dense()
                .ok_or_else(|| Error::Unsupported(format!("{scheme} has no matrix form")))?;
            let swapped = CloudPair { x: pair.x_tilde, w: pair.w_tilde, x_tilde: pair.x, w_tilde: pair.w, d: pair.d };
            let rev = build_coupling(scheme, params, swapped)?
                .dense()
                .ok_or_else(|| Error::Unsupported(format!("{scheme} has no matrix form")))?;
            let (w, wt) = (pair.w, pair.w_tilde);
            let mut worst: f64 = 0.0;
            for a in vectors(n, n) {
                for at in vectors(n, n) {
                    let mut forward = 1.0;
                    let mut reverse = 1.0;
                    for (&i, &j) in a.iter().zip(&at) {
                        forward *= if w[i] > 0.0 { w[i] * (fwd.get(i, j) / w[i]) } else { 0.0 };
                        reverse *= if wt[j] > 0.0 { wt[j] * (rev.get(j, i) / wt[j]) } else { 0.0 };
                    }
                    worst = worst.max((forward - reverse).abs());
                }
            }
            Ok(worst)
        }
    }
}
