use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use coupledpf::models::{ModelId, Parameter};
use coupledpf::resampling::{Scheme, TransportParams};
use coupledpf::smoothing::{TestFunction, TruncationPolicy};

use crate::HarnessError;

/// One experiment. Read from a TOML file; command-line flags override
/// individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Set from the subcommand.
    pub experiment: String,
    pub model: String,
    /// Hidden-AR state dimension.
    pub dim: usize,
    /// Empty means the model's default parameter.
    pub theta: Vec<f64>,
    /// Parameter used to simulate data; empty means `theta`.
    pub data_theta: Vec<f64>,
    /// Observation file (CSV with columns y1..yd); simulated when absent.
    pub data: Option<PathBuf>,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "N")]
    pub particles: usize,
    #[serde(rename = "R")]
    pub replicates: usize,
    /// Coupled resampling schemes; experiments that use one scheme take the first.
    pub schemes: Vec<String>,
    pub epsilon_frac: f64,
    pub alpha_target: f64,
    pub sinkhorn_max_iter: usize,
    pub rho: f64,
    /// Finite-difference steps.
    pub h: Vec<f64>,
    /// Fixed truncation index of the smoother.
    pub m: Option<usize>,
    /// Geometric truncation probability of the smoother.
    pub p: Option<f64>,
    /// PMMH chain length.
    pub iterations: usize,
    /// Cap on coupled sweeps per smoother replicate.
    pub max_meeting_iterations: usize,
    pub proposal_sd: Vec<f64>,
    /// Standard deviation of the independent Gaussian prior used by PMMH.
    pub prior_sd: f64,
    /// Values of the first parameter component for likelihood profiles.
    pub grid: Vec<f64>,
    pub test_function: String,
    pub rao_blackwell: bool,
    pub ancestor_sampling: bool,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub out: PathBuf,
    pub allow_incomplete: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: String::new(),
            model: "hidden-ar".into(),
            dim: 1,
            theta: Vec::new(),
            data_theta: Vec::new(),
            data: None,
            horizon: 100,
            particles: 128,
            replicates: 100,
            schemes: vec!["index".into()],
            epsilon_frac: 0.05,
            alpha_target: 0.95,
            sinkhorn_max_iter: 1000,
            rho: 0.99,
            h: vec![0.001],
            m: None,
            p: None,
            iterations: 1000,
            max_meeting_iterations: 10_000,
            proposal_sd: Vec::new(),
            prior_sd: 1.0,
            grid: Vec::new(),
            test_function: "mean-per-time".into(),
            rao_blackwell: false,
            ancestor_sampling: false,
            seed: 1,
            workers: 0,
            out: PathBuf::from("out"),
            allow_incomplete: false,
        }
    }
}

fn field(name: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config { field: name.into(), message: message.into() }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Parse(msg) => HarnessError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn model_id(&self) -> Result<ModelId, HarnessError> {
        self.model.parse().map_err(|e: coupledpf::Error| field("model", e.to_string()))
    }

    pub fn scheme_list(&self) -> Result<Vec<Scheme>, HarnessError> {
        self.schemes.iter().map(|s| s.parse().map_err(|e: coupledpf::Error| field("schemes", e.to_string()))).collect()
    }

    pub fn scheme(&self) -> Result<Scheme, HarnessError> {
        self.scheme_list()?.first().copied().ok_or_else(|| field("schemes", "at least one scheme is required"))
    }

    pub fn transport(&self) -> TransportParams {
        TransportParams {
            epsilon: None,
            epsilon_fraction: self.epsilon_frac,
            alpha_target: self.alpha_target,
            max_iter: self.sinkhorn_max_iter,
        }
    }

    pub fn policy(&self) -> TruncationPolicy {
        match (self.m, self.p) {
            (Some(m), _) => TruncationPolicy::FixedM(m),
            (None, Some(p)) if p > 0.0 => TruncationPolicy::Geometric(p),
            _ => TruncationPolicy::None,
        }
    }

    pub fn test_function(&self) -> Result<TestFunction, HarnessError> {
        match self.test_function.as_str() {
            "mean-per-time" => Ok(TestFunction::MeanPerTime),
            "second-moment-per-time" => Ok(TestFunction::SecondMomentPerTime),
            other => Err(field("test_function", format!("unknown test function '{other}'"))),
        }
    }

    /// Range checks that do not need the model.
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.model_id()?;
        self.scheme_list()?;
        self.test_function()?;
        if self.dim == 0 {
            return Err(field("dim", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(field("T", "must be at least 1"));
        }
        if self.particles == 0 {
            return Err(field("N", "must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(field("R", "must be at least 1"));
        }
        if !(self.epsilon_frac > 0.0 && self.epsilon_frac.is_finite()) {
            return Err(field("epsilon_frac", "must be positive"));
        }
        if !(self.alpha_target > 0.0 && self.alpha_target <= 1.0) {
            return Err(field("alpha_target", "must be in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(field("rho", "must be in [0, 1]"));
        }
        if self.h.is_empty() || self.h.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(field("h", "needs one or more positive steps"));
        }
        if let Some(p) = self.p {
            if !(0.0..1.0).contains(&p) {
                return Err(field("p", "must be in [0, 1)"));
            }
        }
        if self.m.is_some() && self.p.is_some_and(|p| p > 0.0) {
            return Err(field("m", "m and p cannot both be set"));
        }
        if self.max_meeting_iterations < 2 {
            return Err(field("max_meeting_iterations", "must be at least 2"));
        }
        if !(self.prior_sd > 0.0 && self.prior_sd.is_finite()) {
            return Err(field("prior_sd", "must be positive"));
        }
        if self.proposal_sd.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(field("proposal_sd", "entries must be finite and non-negative"));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(field("grid", "must be strictly increasing"));
        }
        Ok(())
    }

    pub fn parameter(&self, default: Parameter, d_theta: usize) -> Result<Parameter, HarnessError> {
        let p = if self.theta.is_empty() { default } else { self.to_parameter("theta", &self.theta)? };
        if p.len() != d_theta {
            return Err(field("theta", format!("model expects {d_theta} values, got {}", p.len())));
        }
        Ok(p)
    }

    pub fn to_parameter(&self, name: &str, v: &[f64]) -> Result<Parameter, HarnessError> {
        Parameter::new(v.to_vec()).map_err(|e| field(name, e.to_string()))
    }

    /// Hash of every field that affects results; output location, worker
    /// count and the incomplete-run policy are excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            for k in ["out", "workers", "allow_incomplete"] {
                map.remove(k);
            }
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn csv_header(&self) -> String {
        format!("# coupledpf config_hash={} seed={}\n", self.hash(), self.seed)
    }
}

/// Command-line overrides. Each flag that is present replaces the
/// corresponding config field.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML experiment file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long = "T")]
    pub horizon: Option<usize>,
    #[arg(long = "N")]
    pub particles: Option<usize>,
    #[arg(long = "R")]
    pub replicates: Option<usize>,
    /// One scheme, or a comma-separated list for the finite-difference study.
    #[arg(long, value_delimiter = ',')]
    pub scheme: Option<Vec<String>>,
    #[arg(long)]
    pub epsilon_frac: Option<f64>,
    #[arg(long)]
    pub alpha_target: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub h: Option<Vec<f64>>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub allow_incomplete: bool,
}

impl Overrides {
    pub fn resolve(&self, experiment: &str) -> Result<ExperimentConfig, HarnessError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        c.experiment = experiment.to_string();
        macro_rules! set {
            ($($src:ident => $dst:ident),*) => {
                $(if let Some(v) = &self.$src { c.$dst = v.clone(); })*
            };
        }
        set!(model => model, theta => theta, horizon => horizon, particles => particles,
             replicates => replicates, scheme => schemes, epsilon_frac => epsilon_frac,
             alpha_target => alpha_target, rho => rho, h => h, iterations => iterations,
             seed => seed, workers => workers, out => out);
        if let Some(m) = self.m {
            c.m = Some(m);
        }
        if let Some(p) = self.p {
            c.p = Some(p);
        }
        if self.allow_incomplete {
            c.allow_incomplete = true;
        }
        c.validate()?;
        Ok(c)
    }
}
