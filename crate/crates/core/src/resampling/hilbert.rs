//! Hilbert space-filling curve keys for points in a bounding box.

use crate::error::{Error, Result};

/// Axis-aligned box used to discretize points onto the curve grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    /// Smallest box containing every point of every cloud (row-major, `d` coordinates).
    pub fn of_clouds(clouds: &[&[f64]], d: usize) -> Self {
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for cloud in clouds {
            for p in cloud.chunks_exact(d) {
                for i in 0..d {
                    lo[i] = lo[i].min(p[i]);
                    hi[i] = hi[i].max(p[i]);
                }
            }
        }
        BoundingBox { lo, hi }
    }

    /// Grid cell of `x` at `order` bits per axis. A zero-width axis is
    /// widened to unit width around its value.
    pub fn cell(&self, x: &[f64], order: u32) -> Vec<u64> {
        let side = (1u64 << order) as f64;
        let max_cell = (1u64 << order) - 1;
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let (mut lo, mut hi) = (self.lo[i], self.hi[i]);
                if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
                    lo = v - 0.5;
                    hi = v + 0.5;
                }
                let t = ((v - lo) / (hi - lo) * side).floor();
                if t.is_nan() || t < 0.0 {
                    0
                } else {
                    (t as u64).min(max_cell)
                }
            })
            .collect()
    }
}

/// Bits per axis used for a `d`-dimensional state.
pub fn default_order(d: usize) -> u32 {
    (62 / d.max(1)).min(16) as u32
}

/// Hilbert index of a grid cell with `order` bits per axis (Skilling's transform).
pub fn hilbert_index(cell: &[u64], order: u32) -> Result<u64> {
    let n = cell.len();
    if n == 0 || order == 0 || n as u32 * order > 64 {
        return Err(Error::InvalidParameter(format!(
            "curve with {n} axes and {order} bits does not fit in 64 bits"
        )));
    }
    let mut x = cell.to_vec();
    if x.iter().any(|&c| c >> order != 0) {
        return Err(Error::InvalidParameter(format!("cell {cell:?} outside the {order}-bit grid")));
    }
    let m = 1u64 << (order - 1);
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..n {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }
    for i in 1..n {
        x[i] ^= x[i - 1];
    }
    let mut t = 0;
    q = m;
    while q > 1 {
        if x[n - 1] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    x.iter_mut().for_each(|v| *v ^= t);
    let mut key = 0u64;
    for b in (0..order).rev() {
        for v in &x {
            key = (key << 1) | ((v >> b) & 1);
        }
    }
    Ok(key)
}

/// Particle indices sorted by Hilbert key, ties broken by index.
pub fn hilbert_order(points: &[f64], d: usize, bbox: &BoundingBox) -> Vec<usize> {
    let order = default_order(d);
    let n = points.len() / d;
    let mut keyed: Vec<(u64, usize)> = (0..n)
        .map(|k| {
            let cell = bbox.cell(&points[k * d..(k + 1) * d], order);
            (hilbert_index(&cell, order).expect("order fits by construction"), k)
        })
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, k)| k).collect()
}
