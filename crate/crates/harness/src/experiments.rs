//! Experiment runners. Replicates run on a worker pool keyed by replicate
//! index and are merged in replicate order, so outputs do not depend on the
//! number of workers.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::{json, Value};

use coupledpf::filters::{bootstrap_pf, conditional_rerun, FilterTrace};
use coupledpf::inference::{correlated_pmmh, correlation_gain, ess, fd_score, PmmhOptions};
use coupledpf::models::{simulate, ModelId, ObservationSeries, Parameter, StateSpaceModel};
use coupledpf::oracle::{detailed_balance_violation, enumerate_coupling, kalman_loglik, LinearGaussianSpec};
use coupledpf::resampling::{
    build_coupling, distance_matrix, transport_coupling, CloudPair, Coupling, IndexCoupling, Scheme, TransportParams,
    WeightVector,
};
use coupledpf::rng::{unit_normals, unit_uniforms, SeedKey};
use coupledpf::smoothing::{aggregate, rg_estimate, RgEstimate, RgOptions};
use coupledpf::stats;

use crate::{ExperimentConfig, HarnessError};

const DATA_SALT: u64 = 0xda7a;

type Res<T> = Result<T, HarnessError>;

pub fn dispatch(cfg: &ExperimentConfig) -> Res<Value> {
    match cfg.experiment.as_str() {
        "simulate" => run_simulate(cfg),
        "profile-likelihood" => run_profile(cfg),
        "fd-score" => run_fd_study(cfg),
        "pmmh" => run_pmmh(cfg),
        "rg-smooth" => run_rg(cfg),
        "validate" => run_validate(cfg),
        other => Err(HarnessError::Config { field: "experiment".into(), message: format!("unknown experiment '{other}'") }),
    }
}

struct Setup {
    id: ModelId,
    model: Arc<dyn StateSpaceModel>,
    theta: Parameter,
    y: ObservationSeries,
}

fn field(name: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config { field: name.into(), message: message.into() }
}

fn data_key(cfg: &ExperimentConfig) -> SeedKey {
    SeedKey::new(cfg.seed).derive(DATA_SALT)
}

fn replicate_key(cfg: &ExperimentConfig, r: usize) -> SeedKey {
    SeedKey::new(cfg.seed).replicate(r as u64)
}

fn model_and_theta(cfg: &ExperimentConfig) -> Res<(ModelId, Arc<dyn StateSpaceModel>, Parameter)> {
    let id = cfg.model_id()?;
    let model = id.build(cfg.dim, cfg.horizon)?;
    let theta = cfg.parameter(model.default_parameter(), model.spec().d_theta)?;
    model.check_parameter(&theta).map_err(|e| field("theta", e.to_string()))?;
    Ok((id, model, theta))
}

fn data_parameter(cfg: &ExperimentConfig, theta: &Parameter) -> Res<Parameter> {
    if cfg.data_theta.is_empty() {
        Ok(theta.clone())
    } else {
        cfg.to_parameter("data_theta", &cfg.data_theta)
    }
}

fn setup(cfg: &ExperimentConfig) -> Res<Setup> {
    let (id, model, theta) = model_and_theta(cfg)?;
    let y = match &cfg.data {
        Some(path) => ObservationSeries::from_csv(&fs::read_to_string(path)?)?,
        None if id == ModelId::UnlikelyObs => {
            // Observed once, at the final time, with value one.
            let mut v = vec![0.0; cfg.horizon];
            v[cfg.horizon - 1] = 1.0;
            ObservationSeries::new(1, v)?
        }
        None => simulate(&*model, &data_parameter(cfg, &theta)?, cfg.horizon, data_key(cfg))?.observations,
    };
    Ok(Setup { id, model, theta, y })
}

fn pool(cfg: &ExperimentConfig) -> Res<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| field("workers", e.to_string()))
}

/// Run `job` for every replicate in parallel and return results in replicate order.
fn replicates<T, F>(cfg: &ExperimentConfig, count: usize, job: F) -> Res<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Res<T> + Sync + Send,
{
    pool(cfg)?.install(|| (0..count).into_par_iter().map(job).collect())
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn write_csv(cfg: &ExperimentConfig, name: &str, columns: &[String], rows: &[String]) -> Res<PathBuf> {
    fs::create_dir_all(&cfg.out)?;
    let mut text = cfg.csv_header();
    text.push_str(&columns.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    let path = cfg.out.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

fn write_summary(cfg: &ExperimentConfig, mut body: Value) -> Res<Value> {
    if let Some(map) = body.as_object_mut() {
        map.insert("experiment".into(), json!(cfg.experiment));
        map.insert("config_hash".into(), json!(cfg.hash()));
        map.insert("seed".into(), json!(cfg.seed));
    }
    fs::create_dir_all(&cfg.out)?;
    let mut text = serde_json::to_string_pretty(&body).expect("summary serializes");
    text.push('\n');
    fs::write(cfg.out.join("summary.json"), text)?;
    Ok(body)
}

fn cols(fixed: &[&str], extra: impl IntoIterator<Item = String>) -> Vec<String> {
    fixed.iter().map(|s| s.to_string()).chain(extra).collect()
}

pub fn run_simulate(cfg: &ExperimentConfig) -> Res<Value> {
    let (_, model, theta) = model_and_theta(cfg)?;
    let path = simulate(&*model, &data_parameter(cfg, &theta)?, cfg.horizon, data_key(cfg))?;
    let d_x = model.spec().d_x;
    let rows: Vec<String> = path
        .states
        .chunks(d_x)
        .enumerate()
        .map(|(t, x)| std::iter::once(t.to_string()).chain(x.iter().map(|v| num(*v))).collect::<Vec<_>>().join(","))
        .collect();
    write_csv(cfg, "states.csv", &cols(&["t"], (1..=d_x).map(|i| format!("x{i}"))), &rows)?;
    fs::write(cfg.out.join("observations.csv"), format!("{}{}", cfg.csv_header(), path.observations.to_csv()))?;
    write_summary(cfg, json!({ "model": cfg.model, "T": cfg.horizon, "d_x": d_x, "d_y": path.observations.d_y() }))
}

fn with_first(theta: &Parameter, value: f64) -> Res<Parameter> {
    let mut v = theta.values().to_vec();
    v[0] = value;
    Ok(Parameter::new(v)?)
}

fn exact_loglik(s: &Setup, cfg: &ExperimentConfig, theta: &Parameter) -> Res<Option<f64>> {
    let spec = match s.id {
        ModelId::HiddenAr => LinearGaussianSpec::hidden_ar(theta[0], cfg.dim)?,
        ModelId::UnlikelyObs => LinearGaussianSpec::unlikely_observation(theta, cfg.horizon)?,
        _ => return Ok(None),
    };
    Ok(Some(kalman_loglik(&spec, &s.y)?.loglik))
}

pub fn run_profile(cfg: &ExperimentConfig) -> Res<Value> {
    if cfg.grid.is_empty() {
        return Err(field("grid", "profile-likelihood needs a grid of parameter values"));
    }
    let s = setup(cfg)?;
    let scheme = cfg.scheme()?;
    let params = cfg.transport();
    let thetas: Vec<Parameter> = cfg.grid.iter().map(|&g| with_first(&s.theta, g)).collect::<Res<_>>()?;
    let exact: Vec<Option<f64>> = thetas.iter().map(|t| exact_loglik(&s, cfg, t)).collect::<Res<_>>()?;
    let runs = replicates(cfg, cfg.replicates, |r| {
        let key = replicate_key(cfg, r);
        let mut coupled = Vec::with_capacity(thetas.len());
        let mut fresh = Vec::with_capacity(thetas.len());
        let mut prev: Option<FilterTrace> = None;
        for (l, th) in thetas.iter().enumerate() {
            let trace = match &prev {
                None => bootstrap_pf(&*s.model, th, &s.y, cfg.particles, key)?,
                Some(p) => conditional_rerun(&*s.model, &s.y, p, th, p.noise.clone(), scheme, &params, key.time(l as u64))?,
            };
            coupled.push(trace.loglik());
            fresh.push(if l == 0 {
                trace.loglik()
            } else {
                bootstrap_pf(&*s.model, th, &s.y, cfg.particles, key.derive(l as u64))?.loglik()
            });
            prev = Some(trace);
        }
        Ok((coupled, fresh))
    })?;
    let has_exact = exact.iter().all(|e| e.is_some());
    let mut rows = Vec::new();
    for (l, g) in cfg.grid.iter().enumerate() {
        for (r, (coupled, fresh)) in runs.iter().enumerate() {
            let mut row = format!("{},{r},{},{}", num(*g), num(coupled[l]), num(fresh[l]));
            if let (true, Some(e)) = (has_exact, exact[l]) {
                let _ = write!(row, ",{}", num(e));
            }
            rows.push(row);
        }
    }
    let mut columns = cols(&["theta", "replicate", "loglik", "loglik_independent"], []);
    if has_exact {
        columns.push("loglik_kalman".into());
    }
    write_csv(cfg, "profile.csv", &columns, &rows)?;
    // Fraction of replicates whose coupled profile peaks where the exact one does.
    let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b });
    let argmax_agreement = if has_exact {
        let e: Vec<f64> = exact.iter().map(|v| v.unwrap()).collect();
        let target = argmax(&e);
        Some(runs.iter().filter(|(c, _)| argmax(c) == target).count() as f64 / runs.len() as f64)
    } else {
        None
    };
    write_summary(cfg, json!({ "scheme": scheme.name(), "grid_points": cfg.grid.len(), "argmax_agreement": argmax_agreement }))
}

pub fn run_fd_study(cfg: &ExperimentConfig) -> Res<Value> {
    let s = setup(cfg)?;
    let params = cfg.transport();
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for &h in &cfg.h {
        for scheme in cfg.scheme_list()? {
            let pairs = replicates(cfg, cfg.replicates, |r| {
                let f = fd_score(&*s.model, &s.theta, 0, h, &s.y, cfg.particles, scheme, &params, replicate_key(cfg, r))?;
                Ok((f.loglik_plus, f.loglik_minus))
            })?;
            let (rho, gain) = correlation_gain(&pairs)?;
            rows.push(format!("{},{},{},{}", num(h), scheme.name(), num(rho), num(gain)));
            table.push(json!({ "h": h, "scheme": scheme.name(), "correlation": rho, "gain": gain }));
        }
    }
    write_csv(cfg, "fd.csv", &cols(&["h", "scheme", "correlation", "gain"], []), &rows)?;
    write_summary(cfg, json!({ "rows": table }))
}

pub fn run_pmmh(cfg: &ExperimentConfig) -> Res<Value> {
    let s = setup(cfg)?;
    let d = s.theta.len();
    let proposal_sd = if cfg.proposal_sd.is_empty() { vec![0.1; d] } else { cfg.proposal_sd.clone() };
    if proposal_sd.len() != d {
        return Err(field("proposal_sd", format!("expected {d} values, got {}", proposal_sd.len())));
    }
    let opts = PmmhOptions {
        n_particles: cfg.particles,
        iterations: cfg.iterations,
        proposal_sd,
        rho: cfg.rho,
        scheme: cfg.scheme()?,
        transport: cfg.transport(),
    };
    let prior_sd = cfg.prior_sd;
    let log_prior = move |t: &[f64]| t.iter().map(|v| -0.5 * (v / prior_sd).powi(2)).sum::<f64>();
    let chains = replicates(cfg, cfg.replicates, |r| {
        Ok(correlated_pmmh(&*s.model, &log_prior, &s.y, &s.theta, &opts, replicate_key(cfg, r))?)
    })?;
    let mut runs = Vec::new();
    for (r, chain) in chains.iter().enumerate() {
        let rows: Vec<String> = chain
            .theta
            .iter()
            .zip(&chain.loglik)
            .zip(&chain.accepted)
            .enumerate()
            .map(|(i, ((th, ll), acc))| {
                let mut row = (i + 1).to_string();
                for v in th {
                    let _ = write!(row, ",{}", num(*v));
                }
                let _ = write!(row, ",{},{}", num(*ll), *acc as u8);
                row
            })
            .collect();
        let columns = cols(&["iteration"], (1..=d).map(|i| format!("theta_{i}")))
            .into_iter()
            .chain(["loglik".to_string(), "accepted".to_string()])
            .collect::<Vec<_>>();
        write_csv(cfg, &format!("chain-{r:03}.csv"), &columns, &rows)?;
        let ess_values: Vec<Option<f64>> =
            (0..d).map(|i| ess(&chain.component(i)).ok().map(|e| e.value)).collect();
        let means: Vec<f64> = (0..d).map(|i| stats::mean(&chain.component(i))).collect();
        runs.push(json!({
            "replicate": r,
            "acceptance_rate": chain.acceptance_rate(),
            "ess": ess_values,
            "mean": means,
        }));
    }
    write_summary(cfg, json!({ "scheme": opts.scheme.name(), "rho": opts.rho, "ess_estimator": "geyer-initial-positive-sequence", "chains": runs }))
}

pub fn run_rg(cfg: &ExperimentConfig) -> Res<Value> {
    let s = setup(cfg)?;
    let opts = RgOptions {
        n_particles: cfg.particles,
        test_function: cfg.test_function()?,
        policy: cfg.policy(),
        rao_blackwell: cfg.rao_blackwell,
        ancestor_sampling: cfg.ancestor_sampling,
        max_iterations: cfg.max_meeting_iterations,
        scheme: cfg.scheme()?,
    };
    opts.validate()?;
    let estimates: Vec<RgEstimate> =
        replicates(cfg, cfg.replicates, |r| Ok(rg_estimate(&*s.model, &s.theta, &s.y, &opts, replicate_key(cfg, r))?))?;
    let d_x = s.model.spec().d_x;
    let dim = estimates[0].h.len();
    let names: Vec<String> = (0..dim).map(|k| format!("t{}_x{}", k / d_x, k % d_x + 1)).collect();
    let rows: Vec<String> = estimates
        .iter()
        .enumerate()
        .map(|(r, e)| {
            let tau = e.tau.map(|t| t.to_string()).unwrap_or_default();
            let mut row = format!("{r},{tau},{},{},{}", e.iterations_run, e.complete as u8, e.cost_units);
            for v in &e.h {
                let _ = write!(row, ",{}", num(*v));
            }
            row
        })
        .collect();
    write_csv(cfg, "rg.csv", &cols(&["replicate", "tau", "iterations", "complete", "cost"], names.clone()), &rows)?;
    let incomplete = estimates.iter().filter(|e| !e.complete).count();
    // Fewer than two complete replicates leave nothing to aggregate.
    let agg = aggregate(&estimates).ok();
    if let Some(agg) = &agg {
        let agg_rows: Vec<String> = (0..dim)
            .map(|k| {
                format!(
                    "{},{},{},{},{},{}",
                    names[k],
                    num(agg.mean[k]),
                    num(agg.sd[k]),
                    num(agg.se[k]),
                    num(agg.ci_low[k]),
                    num(agg.ci_high[k])
                )
            })
            .collect();
        write_csv(cfg, "rg_aggregate.csv", &cols(&["component", "mean", "sd", "se", "ci_low", "ci_high"], []), &agg_rows)?;
    }
    let finite = |v: f64| if v.is_finite() { json!(v) } else { Value::Null };
    let summary = write_summary(
        cfg,
        json!({
            "scheme": opts.scheme.name(),
            "complete": estimates.len() - incomplete,
            "incomplete": incomplete,
            "tau_mean": agg.as_ref().map(|a| finite(a.tau_mean)),
            "tau_sd": agg.as_ref().map(|a| finite(a.tau_sd)),
            "tau_max": agg.as_ref().map(|a| a.tau_max),
            "mean_cost": stats::mean(&estimates.iter().map(|e| e.cost_units as f64).collect::<Vec<_>>()),
        }),
    )?;
    if incomplete > 0 {
        eprintln!("warning: {incomplete} replicates hit the iteration cap and were left out of the aggregate");
        if !cfg.allow_incomplete {
            return Err(HarnessError::Incomplete(incomplete));
        }
    }
    if agg.is_none() {
        eprintln!("warning: fewer than two complete replicates; no aggregate written");
    }
    Ok(summary)
}

struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
}

fn random_weights(key: SeedKey, n: usize) -> Res<WeightVector> {
    let u: Vec<f64> = unit_uniforms(key, n).into_iter().map(|v| v + 0.02).collect();
    let s: f64 = u.iter().sum();
    Ok(WeightVector::new(u.into_iter().map(|v| v / s).collect())?)
}

fn oracle_checks(cfg: &ExperimentConfig) -> Res<Vec<Check>> {
    let key = SeedKey::new(cfg.seed);
    let mut out = Vec::new();

    let w = WeightVector::new(vec![0.7, 0.3])?;
    let wt = WeightVector::new(vec![0.4, 0.6])?;
    let p = Coupling::Index(IndexCoupling::new(&w, &wt)?).dense().expect("matrix form");
    let err = p.data.iter().zip([0.4, 0.3, 0.0, 0.3]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(Check { name: "index-closed-form", value: err, tolerance: 1e-12 });

    let mut worst: f64 = 0.0;
    for rep in 0..10u64 {
        let k = key.derive(1).replicate(rep);
        let (w, wt) = (random_weights(k.derive(1), 32)?, random_weights(k.derive(2), 32)?);
        let dist = distance_matrix(&unit_normals(k.derive(3), 32), &unit_normals(k.derive(4), 32), 1)?;
        worst = worst.max(transport_coupling(&dist, &w, &wt, &TransportParams::default())?.marginal_error());
    }
    out.push(Check { name: "transport-marginals", value: worst, tolerance: 1e-9 });

    let mut margin: f64 = 0.0;
    let mut balance: f64 = 0.0;
    for rep in 0..20u64 {
        let k = key.derive(2).replicate(rep);
        let (w, wt) = (random_weights(k.derive(1), 2)?, random_weights(k.derive(2), 2)?);
        let (x, xt) = (unit_normals(k.derive(3), 2), unit_normals(k.derive(4), 2));
        let cp = CloudPair { x: &x, w: &w, x_tilde: &xt, w_tilde: &wt, d: 1 };
        for scheme in [Scheme::Independent, Scheme::Sorted, Scheme::IndexCoupled, Scheme::TransportSymmetrized] {
            balance = balance.max(detailed_balance_violation(scheme, &TransportParams::default(), cp)?);
        }
        let p = build_coupling(Scheme::IndexCoupled, &TransportParams::default(), cp)?.dense().expect("matrix form");
        let mut by_a = std::collections::BTreeMap::<Vec<usize>, f64>::new();
        for o in enumerate_coupling(&p)? {
            *by_a.entry(o.a).or_default() += o.probability;
        }
        for (a, pr) in by_a {
            margin = margin.max((pr - a.iter().map(|&i| w[i]).product::<f64>()).abs());
        }
    }
    out.push(Check { name: "detailed-balance", value: balance, tolerance: 1e-12 });
    out.push(Check { name: "enumerated-margins", value: margin, tolerance: 1e-12 });

    // x0 ~ N(0, 1), x1 = noise, y1 = x1 + noise: y1 ~ N(0, 2).
    let y = ObservationSeries::new(1, vec![0.0])?;
    let ll = kalman_loglik(&LinearGaussianSpec::hidden_ar(0.0, 1)?, &y)?.loglik;
    out.push(Check { name: "kalman-one-step", value: (ll + 0.5 * (4.0 * std::f64::consts::PI).ln()).abs(), tolerance: 1e-12 });

    let model = ModelId::HiddenAr.build(1, 10)?;
    let theta = Parameter::scalar(0.5)?;
    let y = simulate(&*model, &theta, 10, key.derive(3))?.observations;
    let exact = kalman_loglik(&LinearGaussianSpec::hidden_ar(0.5, 1)?, &y)?.loglik;
    let ratios = replicates(cfg, 500, |r| {
        Ok((bootstrap_pf(&*model, &theta, &y, 32, key.derive(4).replicate(r as u64))?.loglik() - exact).exp())
    })?;
    let z = (stats::mean(&ratios) - 1.0).abs() / stats::standard_error(&ratios);
    out.push(Check { name: "bpf-unbiased-z", value: z, tolerance: 3.0 });
    Ok(out)
}

pub fn run_validate(cfg: &ExperimentConfig) -> Res<Value> {
    let checks = oracle_checks(cfg)?;
    let rows: Vec<String> = checks
        .iter()
        .map(|c| format!("{},{},{},{}", c.name, (c.value <= c.tolerance) as u8, num(c.value), num(c.tolerance)))
        .collect();
    write_csv(cfg, "validate.csv", &cols(&["check", "passed", "value", "tolerance"], []), &rows)?;
    let failed = checks.iter().filter(|c| c.value > c.tolerance).count();
    let summary = write_summary(
        cfg,
        json!({
            "checks": checks.iter().map(|c| json!({ "name": c.name, "value": c.value, "tolerance": c.tolerance, "passed": c.value <= c.tolerance })).collect::<Vec<_>>(),
            "failed": failed,
        }),
    )?;
    if failed > 0 {
        return Err(HarnessError::ChecksFailed(failed));
    }
    Ok(summary)
}
