//! One function per command. Each returns the files to write; the caller
//! stamps them with the config digest.

use std::fmt::Write as _;

use serde_json::{json, Value};
use wetting_core::continuum::{
    bessel3_weighted_ensembles, brownian_increments, ks_with_batch_se, path_to_csv, simulate_path, terminal_values,
    weighted_ensemble_to_csv, ContinuumConfig, ConvergenceRow, Mollifier,
};
use wetting_core::io::fmt_real;
use wetting_core::lattice_dynamics::{simulate_ensemble, trajectory_to_csv, LatticeManifest, LatticeRunConfig};
use wetting_core::spde::{
    oracle_initial_fields, run_ensemble, snapshot_to_csv, SpdeConfig, SpdeManifest, SpdeRunSettings,
};
use wetting_core::static_models::{
    sample_static, samples_to_csv, ChainSettings, PotentialShape, StaticTarget, StripPotential,
};
use wetting_core::stats::{
    holder_slope, increment_moment_report, ks_two_sample_weighted, reflecting_bm_cdf, Direction, WeightedEcdf,
};
use wetting_core::verify::{mollified_endpoint_oracle, run_criteria, AcceptanceSizes, CriterionReport};
use wetting_core::{SeedSpec, TimeGrid, WettingError};

use crate::config::{ConfigError, RunConfig};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Model(WettingError),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<WettingError> for RunError {
    fn from(e: WettingError) -> Self {
        RunError::Model(e)
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Model(e.into())
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => e.fmt(f),
            RunError::Model(e) => e.fmt(f),
        }
    }
}

pub enum FileBody {
    Csv(String),
    Json(Value),
}

pub struct Output {
    pub files: Vec<(String, FileBody)>,
    /// Extra fields for the run manifest.
    pub summary: Value,
    /// `Some(false)` when a verification failed.
    pub verdict: Option<bool>,
}

impl Output {
    fn new(summary: Value) -> Self {
        Self {
            files: Vec::new(),
            summary,
            verdict: None,
        }
    }

    fn csv(mut self, name: impl Into<String>, body: String) -> Self {
        self.files.push((name.into(), FileBody::Csv(body)));
        self
    }

    fn json(mut self, name: impl Into<String>, body: Value) -> Self {
        self.files.push((name.into(), FileBody::Json(body)));
        self
    }
}

fn seed_spec(cfg: &RunConfig, label: &str) -> SeedSpec {
    SeedSpec::new(cfg.seed, 0, label)
}

fn strip_potential(cfg: &RunConfig) -> Result<StripPotential, RunError> {
    let shape = match cfg.get_str("shape") {
        "smooth-bump" => PotentialShape::SmoothBump,
        "indicator" => PotentialShape::Indicator,
        other => {
            return Err(ConfigError::BadValue {
                key: "shape".into(),
                value: other.into(),
                reason: "expected smooth-bump or indicator".into(),
            }
            .into())
        }
    };
    Ok(StripPotential::new(cfg.get("a")?, cfg.get("beta")?, shape)?)
}

pub fn sample_static_cmd(cfg: &RunConfig) -> Result<Output, RunError> {
    let n: usize = cfg.get("n")?;
    let target = match cfg.get_str("model") {
        "strip" => StaticTarget::Strip(strip_potential(cfg)?),
        "pinning" => StaticTarget::Pinning { beta: cfg.get("beta")? },
        other => {
            return Err(ConfigError::BadValue {
                key: "model".into(),
                value: other.into(),
                reason: "expected strip or pinning".into(),
            }
            .into())
        }
    };
    let defaults = ChainSettings::defaults(n);
    let settings = ChainSettings {
        burn_in: cfg.get_auto("burn_in")?.unwrap_or(defaults.burn_in),
        thin: cfg.get_auto("thin")?.unwrap_or(defaults.thin),
    };
    let samples: usize = cfg.get("samples")?;
    let chains: usize = cfg.get("chains")?;
    let (rows, tau) = sample_static(n, &target, samples, chains, settings, &seed_spec(cfg, "sample-static"))?;
    Ok(Output::new(json!({"burn_in": settings.burn_in, "thin": settings.thin, "autocorr_time": tau, "rows": rows.len()}))
        .csv("samples.csv", samples_to_csv(&rows, None)))
}

pub fn simulate_lattice_cmd(cfg: &RunConfig) -> Result<Output, RunError> {
    let run = LatticeRunConfig {
        n: cfg.get("n")?,
        potential: StripPotential::smooth_bump(cfg.get("a")?, cfg.get("beta")?)?,
        horizon: cfg.get("T")?,
        obs_times: cfg.get_list("obs_times")?,
        dt_micro: Some(cfg.get("dt_micro")?),
    };
    let replicas: usize = cfg.get("replicas")?;
    let trajs = simulate_ensemble(&run, replicas, &seed_spec(cfg, "simulate-lattice"))?;
    let mut csv = String::from("replica,t,site,value\n");
    for (r, t) in trajs.iter().enumerate() {
        for line in trajectory_to_csv(t).lines().skip(1) {
            let _ = writeln!(csv, "{r},{line}");
        }
    }
    let unstable: usize = trajs.iter().map(|t| t.unstable_steps).sum();
    let compl = trajs.iter().map(|t| t.complementarity.abs()).fold(0.0, f64::max);
    let manifest = serde_json::to_value(LatticeManifest::new(&run, cfg.seed))?;
    Ok(Output::new(json!({"replicas": replicas, "unstable_steps": unstable, "max_complementarity": compl}))
        .csv("trajectories.csv", csv)
        .json("lattice_manifest.json", manifest))
}

pub fn simulate_continuum_cmd(cfg: &RunConfig) -> Result<Output, RunError> {
    let a: f64 = cfg.get("a")?;
    let eta: f64 = cfg.get("eta")?;
    let grid = TimeGrid::unit_with_step(cfg.get("dt")?)?;
    let paths: usize = cfg.get("paths")?;
    let seed = seed_spec(cfg, "simulate-continuum");
    match cfg.get_str("mode") {
        "truncated" => {
            let c = ContinuumConfig::new(a, eta, None, grid)?;
            let x = terminal_values(&c, paths, &seed)?;
            let mut csv = String::from("path_id,X_1\n");
            for (i, v) in x.iter().enumerate() {
                let _ = writeln!(csv, "{i},{}", fmt_real(*v));
            }
            let mut out = Output::new(json!({"paths": paths})).csv("terminal.csv", csv);
            let dumps: usize = cfg.get("dump_paths")?;
            let m = Mollifier::new(c.kernel_width())?;
            for p in 0..dumps.min(paths) {
                let mut rng = seed.replica(p as u64).stream();
                let path = simulate_path(&c, brownian_increments(&grid, &mut rng), &m)?;
                out = out.csv(format!("path_{p}.csv"), path_to_csv(&path));
            }
            Ok(out)
        }
        "weighted" => {
            let kernel: f64 = cfg.get("kernel")?;
            let ens = bessel3_weighted_ensembles(&[(a, eta)], &[kernel], &grid, paths, &seed)?;
            Ok(Output::new(json!({"paths": paths, "kernel": kernel}))
                .csv("weighted.csv", weighted_ensemble_to_csv(&ens[0], 0)?))
        }
        other => Err(ConfigError::BadValue {
            key: "mode".into(),
            value: other.into(),
            reason: "expected truncated or weighted".into(),
        }
        .into()),
    }
}

pub fn simulate_spde_cmd(cfg: &RunConfig) -> Result<Output, RunError> {
    let n_space: usize = cfg.get("n_space")?;
    let dx = 1.0 / n_space.max(1) as f64;
    let spde = SpdeConfig {
        n_space,
        dt: cfg.get_auto("dt")?.unwrap_or(dx * dx / 16.0),
        eta: cfg.get("eta")?,
        eps: cfg.get("eps")?,
        a: cfg.get("a")?,
        attraction: cfg.get("attraction")?,
        endpoint_tilt: cfg.get("endpoint_tilt")?,
        bridge_correction: cfg.get("bridge_correction")?,
    };
    spde.validate()?;
    let settings = SpdeRunSettings {
        replicas: cfg.get("replicas")?,
        burn_in: cfg.get("burn_in")?,
        record_every: cfg.get("record_every")?,
        records: cfg.get("records")?,
    };
    let seed = seed_spec(cfg, "simulate-spde");
    let init = match cfg.get_str("init") {
        "oracle" => oracle_initial_fields(&spde, settings.replicas, 4 * settings.replicas, &seed)?,
        "zero" => vec![vec![0.0; n_space]],
        other => {
            return Err(ConfigError::BadValue {
                key: "init".into(),
                value: other.into(),
                reason: "expected oracle or zero".into(),
            }
            .into())
        }
    };
    let ens = run_ensemble(&spde, &settings, &init, &seed)?;
    let mut endpoint = String::from("replica,record,u1\n");
    for (r, rep) in ens.replicas.iter().enumerate() {
        for (k, v) in rep.endpoint_records.iter().enumerate() {
            let _ = writeln!(endpoint, "{r},{k},{}", fmt_real(*v));
        }
    }
    let steps = ((settings.burn_in + settings.record_every * settings.records as f64) / spde.dt).round() as usize;
    let manifest = SpdeManifest {
        n_space,
        dt: spde.dt,
        eta: spde.eta,
        eps: spde.eps,
        seed: cfg.seed,
        steps,
    };
    let window = ens.window_fraction()?;
    Ok(Output::new(json!({
        "complementarity": ens.complementarity(),
        "min_u": ens.min_u(),
        "window_fraction": window.mean,
        "window_fraction_se": window.se,
    }))
    .csv("snapshot.csv", snapshot_to_csv(&ens.replicas[0].final_state, &spde))
    .csv("endpoint.csv", endpoint)
    .json("spde_manifest.json", serde_json::to_value(manifest)?))
}

pub fn verify_cmd(cfg: &RunConfig, threads: usize) -> Result<Output, RunError> {
    let sizes = match cfg.get_str("profile") {
        "full" => AcceptanceSizes::full(),
        "smoke" => AcceptanceSizes::smoke(),
        other => {
            return Err(ConfigError::BadValue {
                key: "profile".into(),
                value: other.into(),
                reason: "expected full or smoke".into(),
            }
            .into())
        }
    };
    let ids: Vec<u32> = cfg.get_list("criteria")?;
    if let Some(bad) = ids.iter().find(|&&i| !(1..=9).contains(&i)) {
        return Err(ConfigError::BadValue {
            key: "criteria".into(),
            value: bad.to_string(),
            reason: "criteria are numbered 1 to 9".into(),
        }
        .into());
    }
    let reports = run_criteria(&ids, &sizes, &AcceptanceSizes::smoke(), cfg.seed, threads.max(3))?;
    for r in &reports {
        println!("{}", r.line());
    }
    let all_pass = reports.iter().all(|r| r.pass);
    let verdicts: Vec<_> = reports.iter().flat_map(|r| r.records.iter().cloned()).collect();
    let mut summary = String::from("criterion,title,criterion_pass,test_id,statistic,threshold,pass\n");
    for r in &reports {
        for v in &r.records {
            let _ = writeln!(
                summary,
                "{},{},{},{},{},{},{}",
                r.id,
                r.title,
                r.pass,
                v.test_id,
                fmt_real(v.statistic),
                fmt_real(v.threshold),
                v.pass
            );
        }
    }
    let mut out = Output::new(json!({"pass": all_pass, "criteria": ids}))
        .json("report.json", json!({"pass": all_pass, "criteria": reports_json(&reports)?}))
        .json("verdicts.json", json!({"verdicts": verdicts}))
        .csv("report.csv", summary);
    for r in &reports {
        for a in &r.artifacts {
            let name = format!("c{}_{}", r.id, a.name);
            out = if a.name.ends_with(".json") {
                let v: Value = serde_json::from_str(&a.content)?;
                out.json(name, v)
            } else {
                out.csv(name, a.content.clone())
            };
        }
    }
    out.verdict = Some(all_pass);
    Ok(out)
}

fn reports_json(reports: &[CriterionReport]) -> Result<Value, RunError> {
    Ok(serde_json::to_value(reports)?)
}

/// Exploratory pipelines; they produce tables, never verdicts.
pub fn report_cmd(cfg: &RunConfig) -> Result<Output, RunError> {
    match cfg.get_str("pipeline") {
        "convergence" => {
            let dt: f64 = cfg.get("dt")?;
            let paths: usize = cfg.get("paths")?;
            let grid = TimeGrid::unit_with_step(dt)?;
            let seed = seed_spec(cfg, "report-convergence");
            let mut rows = Vec::new();
            for eta in cfg.get_list::<f64>("etas")? {
                let c = ContinuumConfig::new(0.0, eta, None, grid)?;
                let x = terminal_values(&c, paths, &seed)?;
                let (ks, ks_se) = ks_with_batch_se(&x, |v| reflecting_bm_cdf(1.0, v))?;
                rows.push(ConvergenceRow { eta, dt, n_paths: paths, ks, ks_se });
            }
            Ok(Output::new(json!({"rows": rows.len()})).json("convergence.json", json!({"rows": rows})))
        }
        "lattice-scaling" => {
            let replicas: usize = cfg.get("replicas")?;
            let pot = StripPotential::smooth_bump(0.2, 5f64.ln())?;
            let h_set = (1..=3).map(Direction::sine_mode).collect::<Result<Vec<_>, _>>()?;
            let times = wetting_core::verify::LATTICE_OBS_TIMES.to_vec();
            let mut csv = String::from("n,s,t,h_id,ratio,se,replicas,unreliable\n");
            let mut slopes = Vec::new();
            let mut all_rows = Vec::new();
            for n in cfg.get_list::<usize>("sizes")? {
                let run = LatticeRunConfig {
                    n,
                    potential: pot,
                    horizon: *times.last().unwrap(),
                    obs_times: times.clone(),
                    dt_micro: None,
                };
                let trajs = simulate_ensemble(&run, replicas, &seed_spec(cfg, &format!("report-lattice-n{n}")))?;
                let rows = increment_moment_report(
                    &trajs,
                    &h_set,
                    &wetting_core::verify::LATTICE_PAIRS,
                    wetting_core::verify::LATTICE_CUTOFF,
                )?;
                slopes.push(json!({"n": n, "holder_slope": holder_slope(&rows, n)?}));
                all_rows.extend(rows.iter().cloned());
                for r in &rows {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{},{},{},{}",
                        r.n,
                        fmt_real(r.s),
                        fmt_real(r.t),
                        r.h_id,
                        fmt_real(r.ratio),
                        fmt_real(r.se),
                        r.replicas,
                        r.unreliable
                    );
                }
            }
            Ok(Output::new(json!({"slopes": slopes}))
                .csv("increments.csv", csv)
                .json("increments.json", json!({"rows": all_rows})))
        }
        "spde-limit" => {
            let n_space: usize = cfg.get("n_space")?;
            let replicas: usize = cfg.get("replicas")?;
            let ratio: f64 = cfg.get("eps_ratio")?;
            let dx = 1.0 / n_space.max(1) as f64;
            let mut rows = Vec::new();
            for eta in cfg.get_list::<f64>("etas")? {
                let spde = SpdeConfig::new(n_space, dx * dx / 8.0, eta, ratio * eta)?;
                let settings = SpdeRunSettings {
                    replicas,
                    burn_in: 1.0,
                    record_every: 0.5,
                    records: 4,
                };
                let seed = seed_spec(cfg, &format!("report-spde-eta{eta}"));
                let init = oracle_initial_fields(&spde, replicas, 4 * replicas, &seed)?;
                let ens = run_ensemble(&spde, &settings, &init, &seed)?;
                let samples = WeightedEcdf::unweighted(&ens.endpoint_samples())?;
                let oracle = mollified_endpoint_oracle(eta, ratio * eta, 20_000, &seed.labeled("oracle"))?;
                let ks_oracle = ks_two_sample_weighted(&samples, &oracle, 1.0).statistic;
                let ks_rbm = wetting_core::stats::ks_statistic(&ens.endpoint_samples(), |v| reflecting_bm_cdf(1.0, v), 1.0)?
                    .statistic;
                rows.push(json!({"eta": eta, "eps": ratio * eta, "ks_oracle": ks_oracle, "ks_reflecting_bm": ks_rbm}));
            }
            Ok(Output::new(json!({"rows": rows.len()})).json("spde_limit.json", json!({"rows": rows})))
        }
        other => Err(ConfigError::BadValue {
            key: "pipeline".into(),
            value: other.into(),
            reason: "expected convergence, lattice-scaling or spde-limit".into(),
        }
        .into()),
    }
}
