use rand::Rng;
use rand_distr::StandardNormal;

use super::hilbert::{hilbert_order, BoundingBox};
use super::weights::{systematic_in_order, WeightVector};
use super::AncestorPairs;
use crate::rng::normal_cdf;

/// Randomness of one sorted resampling step: a systematic offset and a
/// uniformly random relabelling of the output slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedDraw {
    pub offset: f64,
    pub perm: Vec<usize>,
}

impl SortedDraw {
    /// Offset from `Phi(z[0])`, permutation from the ranks of `z[1..=count]`.
    pub fn from_normals(z: &[f64], count: usize) -> Self {
        let offset = normal_cdf(z[0]).min(1.0 - f64::EPSILON);
        let mut perm: Vec<usize> = (0..count).collect();
        perm.sort_by(|&i, &j| z[1 + i].total_cmp(&z[1 + j]).then(i.cmp(&j)));
        SortedDraw { offset, perm }
    }

    pub fn random<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Self {
        let z: Vec<f64> = (0..=count).map(|_| rng.sample(StandardNormal)).collect();
        Self::from_normals(&z, count)
    }

    pub fn count(&self) -> usize {
        self.perm.len()
    }

    fn apply(&self, sorted: Vec<usize>) -> Vec<usize> {
        self.perm.iter().map(|&p| sorted[p]).collect()
    }
}

/// Sorted resampling of one cloud: systematic along its Hilbert order.
pub fn sorted_resample(x: &[f64], w: &WeightVector, d: usize, draw: &SortedDraw) -> Vec<usize> {
    let bbox = BoundingBox::of_clouds(&[x], d);
    let order = hilbert_order(x, d, &bbox);
    draw.apply(systematic_in_order(w.as_slice(), Some(&order), draw.count(), draw.offset))
}

/// Both clouds sorted along one Hilbert curve over their joint bounding box,
/// then resampled with common systematic uniforms and a common relabelling.
#[derive(Debug, Clone)]
pub struct SortedCoupling {
    pub w: WeightVector,
    pub w_tilde: WeightVector,
    pub order: Vec<usize>,
    pub order_tilde: Vec<usize>,
    x_tilde: Vec<f64>,
    d: usize,
}

impl SortedCoupling {
    pub fn new(x: &[f64], w: &WeightVector, x_tilde: &[f64], w_tilde: &WeightVector, d: usize) -> Self {
        let bbox = BoundingBox::of_clouds(&[x, x_tilde], d);
        SortedCoupling {
            w: w.clone(),
            w_tilde: w_tilde.clone(),
            order: hilbert_order(x, d, &bbox),
            order_tilde: hilbert_order(x_tilde, d, &bbox),
            x_tilde: x_tilde.to_vec(),
            d,
        }
    }

    pub fn sample(&self, draw: &SortedDraw) -> AncestorPairs {
        let n = draw.count();
        let a = systematic_in_order(self.w.as_slice(), Some(&self.order), n, draw.offset);
        let at = systematic_in_order(self.w_tilde.as_slice(), Some(&self.order_tilde), n, draw.offset);
        AncestorPairs { a: draw.apply(a), a_tilde: draw.apply(at) }
    }

    /// The second system resampled on its own, which is what the conditional
    /// kernel of this scheme reduces to.
    pub fn conditional(&self, draw: &SortedDraw) -> Vec<usize> {
        sorted_resample(&self.x_tilde, &self.w_tilde, self.d, draw)
    }
}
