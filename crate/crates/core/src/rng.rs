//! Counter-based random streams keyed by `(seed, replicate, time, particle, role)`.
//!
//! Every stream is a ChaCha8 generator whose 256-bit seed is a mix of the key
//! fields, so any block of process-generating variables can be regenerated
//! in isolation without replaying earlier draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Result};

/// What a stream is used for. Streams with different roles never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Init,
    Propagate,
    Measure,
    Resample,
    Mcmc,
}

impl Role {
    fn tag(self) -> u64 {
        match self {
            Role::Init => 0x1,
            Role::Propagate => 0x2,
            Role::Measure => 0x3,
            Role::Resample => 0x4,
            Role::Mcmc => 0x5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedKey {
    pub seed: u64,
    pub replicate: u64,
    pub time: u64,
    pub particle: u64,
    pub role: Role,
}

impl SeedKey {
    pub fn new(seed: u64) -> Self {
        SeedKey {
            seed,
            replicate: 0,
            time: 0,
            particle: 0,
            role: Role::Init,
        }
    }

    pub fn replicate(self, replicate: u64) -> Self {
        SeedKey { replicate, ..self }
    }

    pub fn time(self, time: u64) -> Self {
        SeedKey { time, ..self }
    }

    pub fn particle(self, particle: u64) -> Self {
        SeedKey { particle, ..self }
    }

    pub fn role(self, role: Role) -> Self {
        SeedKey { role, ..self }
    }

    /// Derive an independent sub-seed, e.g. one per algorithm phase of a replicate.
    /// The result keeps the replicate index but lives in a distinct seed space.
    pub fn derive(self, salt: u64) -> Self {
        SeedKey {
            seed: mix(self.seed ^ mix(salt.wrapping_add(0x5851_f42d_4c95_7f2d))),
            ..self
        }
    }

    fn words(&self) -> [u64; 4] {
        let a = mix(self.seed ^ 0x243f_6a88_85a3_08d3);
        let b = mix(a ^ self.replicate.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let c = mix(b ^ self.time.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        let d = mix(c ^ self.particle.wrapping_mul(0x94d0_49bb_1331_11eb));
        let e = mix(d ^ self.role.tag());
        [e, mix(e ^ a), mix(e ^ b), mix(e ^ c)]
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The generator for a key. Deterministic and platform-stable.
pub fn stream(key: SeedKey) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    for (chunk, w) in seed.chunks_exact_mut(8).zip(key.words()) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

pub fn unit_normals(key: SeedKey, n: usize) -> Vec<f64> {
    let mut rng = stream(key);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Fill `out` with standard normals from the stream of `key`.
pub fn fill_normals(key: SeedKey, out: &mut [f64]) {
    let mut rng = stream(key);
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

pub fn unit_uniforms(key: SeedKey, n: usize) -> Vec<f64> {
    let mut rng = stream(key);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// Autoregressive move `rho * u + sqrt(1 - rho^2) * xi`, which leaves the
/// standard normal distribution invariant.
pub fn crn_shift(u: &[f64], rho: f64, xi: &[f64]) -> Result<Vec<f64>> {
    check_len("crn_shift", u.len(), xi.len())?;
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    Ok(u.iter().zip(xi).map(|(a, b)| rho * a + s * b).collect())
}

/// Standard normal CDF, used to turn stored normal variates into uniforms.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}
