use crate::error::{check_len, Error, Result};
use crate::models::ModelSpec;
use crate::rng::{crn_shift, fill_normals, Role, SeedKey};

/// Standard normal process-generating variables of one filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBlocks {
    pub n: usize,
    pub init_dim: usize,
    pub prop_dim: usize,
    /// `N * init_dim`.
    pub init: Vec<f64>,
    /// `prop[t - 1]` drives the move to time `t`; each has `N * prop_dim` entries.
    pub prop: Vec<Vec<f64>>,
    /// `resample[t]` drives the resampling at time `t`; `N + 1` entries each.
    pub resample: Vec<Vec<f64>>,
}

impl NoiseBlocks {
    pub fn draw(spec: &ModelSpec, n: usize, horizon: usize, key: SeedKey) -> Self {
        let mut init = vec![0.0; n * spec.init_noise_dim];
        fill_normals(key.role(Role::Init), &mut init);
        let prop = (1..=horizon)
            .map(|t| {
                let mut b = vec![0.0; n * spec.prop_noise_dim];
                fill_normals(key.role(Role::Propagate).time(t as u64), &mut b);
                b
            })
            .collect();
        let resample = (0..horizon)
            .map(|t| {
                let mut b = vec![0.0; n + 1];
                fill_normals(key.role(Role::Resample).time(t as u64), &mut b);
                b
            })
            .collect();
        NoiseBlocks { n, init_dim: spec.init_noise_dim, prop_dim: spec.prop_noise_dim, init, prop, resample }
    }

    pub fn horizon(&self) -> usize {
        self.prop.len()
    }

    pub fn init_block(&self, k: usize) -> &[f64] {
        &self.init[k * self.init_dim..(k + 1) * self.init_dim]
    }

    pub fn prop_block(&self, t: usize, k: usize) -> &[f64] {
        &self.prop[t - 1][k * self.prop_dim..(k + 1) * self.prop_dim]
    }

    pub fn check_shape(&self, spec: &ModelSpec, horizon: usize) -> Result<()> {
        check_len("initial noise dimension", spec.init_noise_dim, self.init_dim)?;
        check_len("propagation noise dimension", spec.prop_noise_dim, self.prop_dim)?;
        check_len("noise horizon", horizon, self.horizon())?;
        check_len("initial noise block", self.n * self.init_dim, self.init.len())?;
        for b in &self.prop {
            check_len("propagation noise block", self.n * self.prop_dim, b.len())?;
        }
        for b in &self.resample {
            check_len("resampling noise block", self.n + 1, b.len())?;
        }
        check_len("resampling blocks", horizon, self.resample.len())
    }

    /// Total number of variates.
    pub fn len(&self) -> usize {
        self.init.len()
            + self.prop.iter().map(Vec::len).sum::<usize>()
            + self.resample.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Autoregressive refresh `rho * U + sqrt(1 - rho^2) * xi` with `xi` drawn
    /// from the stream of `key`.
    pub fn crn_shift(&self, rho: f64, key: SeedKey) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!("CRN correlation must be in [0, 1], got {rho}")));
        }
        let shift = |block: &[f64], salt: u64| -> Result<Vec<f64>> {
            let mut xi = vec![0.0; block.len()];
            fill_normals(key.derive(salt), &mut xi);
            crn_shift(block, rho, &xi)
        };
        let t_max = self.horizon() as u64;
        Ok(NoiseBlocks {
            n: self.n,
            init_dim: self.init_dim,
            prop_dim: self.prop_dim,
            init: shift(&self.init, 0)?,
            prop: self
                .prop
                .iter()
                .enumerate()
                .map(|(t, b)| shift(b, 1 + t as u64))
                .collect::<Result<_>>()?,
            resample: self
                .resample
                .iter()
                .enumerate()
                .map(|(t, b)| shift(b, 1 + t_max + t as u64))
                .collect::<Result<_>>()?,
        })
    }
}
