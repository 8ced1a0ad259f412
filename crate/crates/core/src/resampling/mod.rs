//! Coupled resampling of two weighted particle clouds.

pub mod hilbert;
pub mod index;
pub mod sorted;
pub mod transport;
pub mod weights;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{check_len, Error, Result};
pub use index::IndexCoupling;
pub use sorted::{sorted_resample, SortedCoupling, SortedDraw};
pub use transport::{
    distance_matrix, marginal_correction, sinkhorn, symmetrized_transport, transport_coupling,
    CouplingMatrix, Matrix, SinkhornOutput, TransportParams,
};
pub use weights::{log_sum_exp, multinomial, multinomial_from_uniforms, systematic, Cumulative, WeightVector};

/// Paired ancestor indices, 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AncestorPairs {
    pub a: Vec<usize>,
    pub a_tilde: Vec<usize>,
}

impl AncestorPairs {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn matches(&self) -> usize {
        self.a.iter().zip(&self.a_tilde).filter(|(a, b)| a == b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Independent,
    Sorted,
    IndexCoupled,
    Transport,
    TransportSymmetrized,
    /// Systematic resampling of both clouds in index order with one common
    /// uniform. Only usable jointly.
    CommonSystematic,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Independent,
        Scheme::Sorted,
        Scheme::IndexCoupled,
        Scheme::Transport,
        Scheme::TransportSymmetrized,
        Scheme::CommonSystematic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Independent => "independent",
            Scheme::Sorted => "sorted",
            Scheme::IndexCoupled => "index",
            Scheme::Transport => "transport",
            Scheme::TransportSymmetrized => "transport-sym",
            Scheme::CommonSystematic => "systematic",
        }
    }

    /// Whether the conditional kernel leaves the resampling law invariant in
    /// both directions, as correlated Metropolis-Hastings requires.
    pub fn is_reversible(&self) -> bool {
        !matches!(self, Scheme::Transport | Scheme::CommonSystematic)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown resampling scheme '{s}'")))
    }
}

/// A joint law on ancestor pairs with margins `(w, w_tilde)`.
#[derive(Debug, Clone)]
pub enum Coupling {
    /// Both systems are bitwise identical: every pair is on the diagonal.
    Diagonal(WeightVector),
    Independent(WeightVector, WeightVector),
    Index(IndexCoupling),
    Dense(CouplingMatrix),
    Sorted(SortedCoupling),
    CommonSystematic(WeightVector, WeightVector),
}

/// Inputs describing one pair of weighted clouds (row-major states, `d` coordinates).
#[derive(Debug, Clone, Copy)]
pub struct CloudPair<'a> {
    pub x: &'a [f64],
    pub w: &'a WeightVector,
    pub x_tilde: &'a [f64],
    pub w_tilde: &'a WeightVector,
    pub d: usize,
}

impl CloudPair<'_> {
    fn identical(&self) -> bool {
        let same_bits = |a: &[f64], b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        };
        same_bits(self.x, self.x_tilde) && same_bits(self.w.as_slice(), self.w_tilde.as_slice())
    }
}

pub fn build_coupling(scheme: Scheme, params: &TransportParams, c: CloudPair<'_>) -> Result<Coupling> {
    let n = c.w.len();
    check_len("w_tilde", n, c.w_tilde.len())?;
    check_len("x", n * c.d, c.x.len())?;
    check_len("x_tilde", n * c.d, c.x_tilde.len())?;
    if c.identical() {
        return Ok(Coupling::Diagonal(c.w.clone()));
    }
    let (w, wt) = (c.w.clone(), c.w_tilde.clone());
    Ok(match scheme {
        Scheme::Independent => Coupling::Independent(w, wt),
        Scheme::IndexCoupled => Coupling::Index(IndexCoupling::new(&w, &wt)?),
        Scheme::Sorted => Coupling::Sorted(SortedCoupling::new(c.x, &w, c.x_tilde, &wt, c.d)),
        Scheme::CommonSystematic => Coupling::CommonSystematic(w, wt),
        Scheme::Transport => {
            let dist = distance_matrix(c.x, c.x_tilde, c.d)?;
            Coupling::Dense(transport_coupling(&dist, &w, &wt, params)?)
        }
        Scheme::TransportSymmetrized => {
            let dist = distance_matrix(c.x, c.x_tilde, c.d)?;
            Coupling::Dense(symmetrized_transport(&dist, &w, &wt, params)?)
        }
    })
}

impl Coupling {
    /// `count` i.i.d. pairs (or, for the systematic-type schemes, one joint
    /// systematic draw of `count` pairs).
    pub fn sample_pairs<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> AncestorPairs {
        match self {
            Coupling::Diagonal(w) => {
                let a = multinomial(w, count, rng);
                AncestorPairs { a_tilde: a.clone(), a }
            }
            Coupling::Independent(w, wt) => {
                AncestorPairs { a: multinomial(w, count, rng), a_tilde: multinomial(wt, count, rng) }
            }
            Coupling::Index(ic) => ic.sample_pairs(count, rng),
            Coupling::Dense(m) => m.sample_pairs(count, rng),
            Coupling::Sorted(s) => s.sample(&SortedDraw::random(count, rng)),
            Coupling::CommonSystematic(w, wt) => {
                let u: f64 = rng.random();
                AncestorPairs {
                    a: systematic(w.as_slice(), count, u),
                    a_tilde: systematic(wt.as_slice(), count, u),
                }
            }
        }
    }

    /// Draw the second system's ancestors given the first system's.
    pub fn conditional_sample<R: Rng + ?Sized>(&self, a: &[usize], rng: &mut R) -> Result<Vec<usize>> {
        match self {
            Coupling::Diagonal(_) => Ok(a.to_vec()),
            Coupling::Independent(_, wt) => Ok(multinomial(wt, a.len(), rng)),
            Coupling::Index(ic) => a.iter().map(|&i| ic.conditional(i, rng)).collect(),
            Coupling::Dense(m) => m.conditional(a, rng),
            Coupling::Sorted(s) => Ok(s.conditional(&SortedDraw::random(a.len(), rng))),
            Coupling::CommonSystematic(..) => Err(Error::Unsupported(
                "common systematic resampling has no conditional kernel".into(),
            )),
        }
    }

    /// The coupling matrix, for schemes that sample i.i.d. pairs from one.
    pub fn dense(&self) -> Option<Matrix> {
        let from_fn = |n: usize, m: usize, f: &dyn Fn(usize, usize) -> f64| {
            let mut out = Matrix::zeros(n, m);
            for i in 0..n {
                for j in 0..m {
                    out.data[i * m + j] = f(i, j);
                }
            }
            out
        };
        match self {
            Coupling::Diagonal(w) => {
                Some(from_fn(w.len(), w.len(), &|i, j| if i == j { w[i] } else { 0.0 }))
            }
            Coupling::Independent(w, wt) => Some(from_fn(w.len(), wt.len(), &|i, j| w[i] * wt[j])),
            Coupling::Index(ic) => Some(from_fn(ic.len(), ic.len(), &|i, j| ic.probability(i, j))),
            Coupling::Dense(m) => Some(m.p.clone()),
            Coupling::Sorted(_) | Coupling::CommonSystematic(..) => None,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Coupling::Diagonal(_))
    }
}
