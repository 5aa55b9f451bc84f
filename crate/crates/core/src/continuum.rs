//! Continuum wetting: the truncated-drift Bessel SDE
//!
//! `dX = 1_{X ≤ η}/X dt + dB`, `X_0 = a`,
//!
//! its local time at `η`, the exponential martingale
//! `ℰ(M)_1 = (X_1∧η)/X_1 · a/(a∧η) · exp(L^η_1/(2η))` under the Bessel-3 law,
//! the mollified variant with `∫ρ_ε(X_s − η)ds` in place of `L^η_1`, and the
//! squared process `Z = X²`.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, WettingError};
use crate::grid::TimeGrid;
use crate::io::fmt_real;
use crate::quadrature::integrate;
use crate::rng::{NoiseSource, SeedSpec};

/// `1/x` inside the strip `(0, η]`, 0 above it.
pub fn drift_truncated(x: f64, eta: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(WettingError::Singular(format!("drift 1/x evaluated at x = {x}")));
    }
    Ok(drift_unchecked(x, eta))
}

#[inline]
fn drift_unchecked(x: f64, eta: f64) -> f64 {
    if x <= eta {
        1.0 / x
    } else {
        0.0
    }
}

/// Symmetrized Euler step `|x + b(max(x, √dt))·dt + dB|`.
#[inline]
pub fn step_truncated_bessel(x: f64, eta: f64, dt: f64, db: f64) -> f64 {
    let floor = dt.sqrt();
    (x + drift_unchecked(x.max(floor), eta) * dt + db).abs()
}

/// Milstein step `(√z + dB)² + 2·1_{z ≤ η²}·dt` for
/// `dZ = 2√Z dB + (2·1_{Z ≤ η²} + 1) dt`; exact in law outside the strip.
#[inline]
pub fn squared_process_step(z: f64, eta: f64, dt: f64, db: f64) -> f64 {
    let extra = if z <= eta * eta { 2.0 * dt } else { 0.0 };
    let r = z.max(0.0).sqrt() + db;
    r * r + extra
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumConfig {
    pub a: f64,
    pub eta: f64,
    pub eps: Option<f64>,
    pub grid: TimeGrid,
}

impl ContinuumConfig {
    pub fn new(a: f64, eta: f64, eps: Option<f64>, grid: TimeGrid) -> Result<Self> {
        let cfg = Self { a, eta, eps, grid };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0) || !self.a.is_finite() {
            return Err(invalid("a", "start must be finite and nonnegative"));
        }
        if !(self.eta > 0.0) {
            return Err(invalid("eta", "truncation level must be positive"));
        }
        if let Some(e) = self.eps {
            if !(e > 0.0 && e < self.eta) {
                return Err(invalid("eps", format!("need 0 < eps < eta, got eps = {e}, eta = {}", self.eta)));
            }
        }
        if self.grid.t0() != 0.0 || self.grid.t1() != 1.0 {
            return Err(invalid("grid", "continuum paths live on [0, 1]"));
        }
        if self.grid.dt() > self.eta * self.eta / 10.0 {
            return Err(invalid(
                "dt",
                format!("step {} does not resolve the strip: need dt ≤ eta²/10 = {}", self.grid.dt(), self.eta * self.eta / 10.0),
            ));
        }
        Ok(())
    }

    /// Default local-time kernel width `√dt`.
    pub fn kernel_width(&self) -> f64 {
        self.grid.dt().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumPath {
    pub x: Vec<f64>,
    pub b_increments: Arc<[f64]>,
    pub local_time_eta: f64,
    /// Downcrossings of `η`.
    pub crossings: usize,
    pub dt: f64,
}

impl ContinuumPath {
    pub fn terminal(&self) -> f64 {
        *self.x.last().expect("nonempty path")
    }

    pub fn min(&self) -> f64 {
        self.x.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Standard normal increments scaled to the grid.
pub fn brownian_increments<R: NoiseSource>(grid: &TimeGrid, rng: &mut R) -> Arc<[f64]> {
    let sd = grid.dt().sqrt();
    (0..grid.steps()).map(|_| sd * rng.normal()).collect()
}

fn downcrossings(x: &[f64], level: f64) -> usize {
    x.windows(2).filter(|w| w[0] > level && w[1] <= level).count()
}

/// Drives the truncated SDE with the given increments.
pub fn simulate_path(cfg: &ContinuumConfig, increments: Arc<[f64]>, mollifier: &Mollifier) -> Result<ContinuumPath> {
    cfg.validate()?;
    if increments.len() != cfg.grid.steps() {
        return Err(invalid("increments", "length differs from the grid"));
    }
    let dt = cfg.grid.dt();
    let mut x = Vec::with_capacity(increments.len() + 1);
    let mut v = cfg.a;
    x.push(v);
    for &db in increments.iter() {
        v = step_truncated_bessel(v, cfg.eta, dt, db);
        x.push(v);
    }
    let local_time_eta = occupation_integral(&x, dt, cfg.eta, mollifier);
    let crossings = downcrossings(&x, cfg.eta);
    Ok(ContinuumPath {
        x,
        b_increments: increments,
        local_time_eta,
        crossings,
        dt,
    })
}

/// All members of a coupled family are driven by one increment array.
pub fn simulate_coupled_family(cfgs: &[ContinuumConfig], seed: &SeedSpec) -> Result<Vec<ContinuumPath>> {
    check_family(cfgs)?;
    let inc = brownian_increments(&cfgs[0].grid, &mut seed.stream());
    let m = Mollifier::new(cfgs[0].kernel_width())?;
    cfgs.iter().map(|c| simulate_path(c, Arc::clone(&inc), &m)).collect()
}

fn check_family(cfgs: &[ContinuumConfig]) -> Result<()> {
    let first = cfgs.first().ok_or_else(|| invalid("cfgs", "empty family"))?;
    for c in cfgs {
        c.validate()?;
        if c.grid != first.grid || c.a != first.a {
            return Err(invalid("cfgs", "family members must share the grid and the start"));
        }
    }
    for (i, c) in cfgs.iter().enumerate() {
        if cfgs[..i].iter().any(|d| d.eta == c.eta) {
            return Err(invalid("cfgs", format!("duplicate eta {}", c.eta)));
        }
    }
    Ok(())
}

/// Values of every family member at the observation indices, per path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMarginals {
    pub etas: Vec<f64>,
    pub times: Vec<f64>,
    /// `values[member][time][path]`.
    pub values: Vec<Vec<Vec<f64>>>,
}

impl FamilyMarginals {
    pub fn at(&self, member: usize, time: usize) -> &[f64] {
        &self.values[member][time]
    }

    /// Fraction of paths with `X^{η_j} > X^{η_k}` at `time` although
    /// `η_j < η_k`, over all such pairs.
    pub fn pathwise_violation_rate(&self, time: usize) -> f64 {
        let mut bad = 0usize;
        let mut total = 0usize;
        for j in 0..self.etas.len() {
            for k in 0..self.etas.len() {
                if self.etas[j] < self.etas[k] {
                    let (lo, hi) = (&self.values[j][time], &self.values[k][time]);
                    bad += lo.iter().zip(hi).filter(|(l, h)| l > h).count();
                    total += lo.len();
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            bad as f64 / total as f64
        }
    }
}

/// Coupled ensemble streamed step by step; only the observed values are kept.
pub fn coupled_ensemble(
    cfgs: &[ContinuumConfig],
    obs_times: &[f64],
    paths: usize,
    seed: &SeedSpec,
) -> Result<FamilyMarginals> {
    check_family(cfgs)?;
    let grid = cfgs[0].grid;
    let obs_idx: Vec<usize> = obs_times.iter().map(|&t| grid.index_of(t)).collect();
    let dt = grid.dt();
    let sd = dt.sqrt();
    let etas: Vec<f64> = cfgs.iter().map(|c| c.eta).collect();
    let per_path: Vec<Vec<Vec<f64>>> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = seed.replica(p as u64).stream();
            let mut x = vec![cfgs[0].a; cfgs.len()];
            let mut out = vec![Vec::with_capacity(obs_idx.len()); cfgs.len()];
            let record = |k: usize, x: &[f64], out: &mut Vec<Vec<f64>>| {
                for _ in obs_idx.iter().filter(|&&i| i == k) {
                    for (m, v) in x.iter().enumerate() {
                        out[m].push(*v);
                    }
                }
            };
            record(0, &x, &mut out);
            for k in 1..=grid.steps() {
                let db = sd * rng.normal();
                for (v, eta) in x.iter_mut().zip(&etas) {
                    *v = step_truncated_bessel(*v, *eta, dt, db);
                }
                record(k, &x, &mut out);
            }
            out
        })
        .collect();
    let mut values = vec![vec![Vec::with_capacity(paths); obs_idx.len()]; cfgs.len()];
    for path in per_path {
        for (m, series) in path.into_iter().enumerate() {
            for (t, v) in series.into_iter().enumerate() {
                values[m][t].push(v);
            }
        }
    }
    Ok(FamilyMarginals {
        etas,
        times: obs_idx.iter().map(|&i| grid.time(i)).collect(),
        values,
    })
}

/// Terminal values `X_1` of independent truncated-SDE paths.
pub fn terminal_values(cfg: &ContinuumConfig, paths: usize, seed: &SeedSpec) -> Result<Vec<f64>> {
    let fam = coupled_ensemble(std::slice::from_ref(cfg), &[1.0], paths, seed)?;
    Ok(fam.values.into_iter().next().unwrap().into_iter().next().unwrap())
}

/// Terminal values `Z_1` of the squared process started at `a²`; `η = 0`
/// gives the squared Bessel-1 process.
pub fn squared_terminal_values(a: f64, eta: f64, grid: &TimeGrid, paths: usize, seed: &SeedSpec) -> Result<Vec<f64>> {
    if !(a >= 0.0) || !(eta >= 0.0) {
        return Err(invalid("eta", "start and truncation level must be nonnegative"));
    }
    let dt = grid.dt();
    let sd = dt.sqrt();
    Ok((0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = seed.replica(p as u64).stream();
            let mut z = a * a;
            for _ in 0..grid.steps() {
                z = squared_process_step(z, eta, dt, sd * rng.normal());
            }
            z
        })
        .collect())
}

/// Bump `ρ_ε(x) = ε⁻¹ρ(x/ε)`, `ρ(u) = c·exp(−1/(1 − u²))` on `(−1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    pub eps: f64,
    pub c: f64,
}

/// `∫_{−1}^{1} exp(−1/(1 − u²)) du`.
pub fn bump_mass() -> f64 {
    integrate(unit_bump, -1.0, 1.0, 1e-15).expect("smooth compact integrand")
}

fn unit_bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

impl Mollifier {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(invalid("eps", "mollifier width must be positive"));
        }
        Ok(Self { eps, c: 1.0 / bump_mass() })
    }

    #[inline]
    pub fn rho(&self, x: f64) -> f64 {
        self.c * unit_bump(x / self.eps) / self.eps
    }

    #[inline]
    pub fn rho_prime(&self, x: f64) -> f64 {
        let u = x / self.eps;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - u * u;
        self.c * (-1.0 / s).exp() * (-2.0 * u / (s * s)) / (self.eps * self.eps)
    }

    /// `F_ε(x) = ∫_{−∞}^x ρ_ε`.
    pub fn cdf(&self, x: f64) -> f64 {
        let u = x / self.eps;
        if u <= -1.0 {
            0.0
        } else if u >= 1.0 {
            1.0
        } else {
            (self.c * integrate(unit_bump, -1.0, u, 1e-15).expect("smooth compact integrand")).min(1.0)
        }
    }

    /// `R_ε(x) = ∫₀^x F_ε(y − η) dy`.
    pub fn double_primitive(&self, x: f64, eta: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let lo = (eta - self.eps).max(0.0);
        let hi = (eta + self.eps).min(x);
        let mut r = 0.0;
        if hi > lo {
            r += integrate(|y| self.cdf(y - eta), lo, hi, 1e-13).expect("bounded integrand");
        }
        if x > eta + self.eps {
            r += x - (eta + self.eps);
        }
        r
    }
}

/// Trapezoidal `∫₀¹ ρ_ε(X_s − level) ds` over a path sampled every `dt`.
pub fn occupation_integral(x: &[f64], dt: f64, level: f64, m: &Mollifier) -> f64 {
    let reach = m.eps;
    let k = |v: f64| if (v - level).abs() < reach { m.rho(v - level) } else { 0.0 };
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = x[1..n - 1].iter().map(|&v| k(v)).sum();
    dt * (inner + 0.5 * (k(x[0]) + k(x[n - 1])))
}

/// Occupation estimate of `L^η_1` with kernel width `eps_kernel`.
pub fn local_time_estimate(path: &ContinuumPath, eta: f64, eps_kernel: f64) -> Result<f64> {
    if eps_kernel < path.dt.sqrt() {
        log::warn!(
            "kernel width {eps_kernel} below √dt = {}; local-time estimate is biased",
            path.dt.sqrt()
        );
    }
    Ok(occupation_integral(&path.x, path.dt, eta, &Mollifier::new(eps_kernel)?))
}

/// `2L_ε − L_{2ε}`, removing the first-order kernel bias.
pub fn richardson(fine: f64, coarse: f64) -> f64 {
    2.0 * fine - coarse
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GirsanovWeight {
    pub log_weight: f64,
    /// `log((X_1∧η)/X_1 · a/(a∧η))`.
    pub log_boundary: f64,
    /// `L^η_1/(2η)`.
    pub occupation: f64,
}

/// `log((X_1∧η)/X_1) + log(a/(a∧η))`, with `0/(0∧η) = 1`.
pub fn log_boundary_factor(a: f64, eta: f64, x1: f64) -> Result<f64> {
    if !(x1 > 0.0) {
        return Err(WettingError::Singular(format!("terminal value X_1 = {x1}")));
    }
    let end = (x1.min(eta) / x1).ln();
    let start = if a == 0.0 { 0.0 } else { (a / a.min(eta)).ln() };
    Ok(end + start)
}

/// Girsanov weight from path summaries; paths staying above `η` get the
/// exact value `log(a/X_1)`.
pub fn girsanov_weight_from_parts(a: f64, eta: f64, x1: f64, path_min: f64, local_time: f64) -> Result<GirsanovWeight> {
    if !(x1 > 0.0) {
        return Err(WettingError::Singular(format!("terminal value X_1 = {x1}")));
    }
    if path_min > eta {
        let log_weight = a.ln() - x1.ln();
        return Ok(GirsanovWeight {
            log_weight,
            log_boundary: log_weight,
            occupation: 0.0,
        });
    }
    let log_boundary = log_boundary_factor(a, eta, x1)?;
    let occupation = local_time / (2.0 * eta);
    Ok(GirsanovWeight {
        log_weight: log_boundary + occupation,
        log_boundary,
        occupation,
    })
}

pub fn girsanov_log_weight(path: &ContinuumPath, a: f64, eta: f64) -> Result<GirsanovWeight> {
    girsanov_weight_from_parts(a, eta, path.terminal(), path.min(), path.local_time_eta)
}

/// Unnormalized log-density of the mollified measure against Bessel-3.
pub fn mollified_log_weight(path: &ContinuumPath, a: f64, eta: f64, m: &Mollifier) -> Result<f64> {
    if !(m.eps < eta) {
        return Err(invalid("eps", format!("need eps < eta, got {} ≥ {eta}", m.eps)));
    }
    let occ = occupation_integral(&path.x, path.dt, eta, m);
    Ok(log_boundary_factor(a, eta, path.terminal())? + occ / (2.0 * eta))
}

/// Bessel-3 path from `a` as the norm of a 3-d Brownian motion, sampled on
/// the grid. Increments are exact.
pub fn bessel3_path<R: NoiseSource>(a: f64, grid: &TimeGrid, rng: &mut R) -> ContinuumPath {
    let sd = grid.dt().sqrt();
    let mut b = [a, 0.0, 0.0];
    let mut x = Vec::with_capacity(grid.steps() + 1);
    let mut inc = Vec::with_capacity(grid.steps());
    x.push(a);
    for _ in 0..grid.steps() {
        let d = [sd * rng.normal(), sd * rng.normal(), sd * rng.normal()];
        let prev = b;
        for c in 0..3 {
            b[c] += d[c];
        }
        let r = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        let r0 = (prev[0] * prev[0] + prev[1] * prev[1] + prev[2] * prev[2]).sqrt();
        inc.push(if r0 > 0.0 { (prev[0] * d[0] + prev[1] * d[1] + prev[2] * d[2]) / r0 } else { d[0] });
        x.push(r);
    }
    ContinuumPath {
        x,
        b_increments: inc.into(),
        local_time_eta: 0.0,
        crossings: 0,
        dt: grid.dt(),
    }
}

/// Per-path summary of a Bessel-3 path for weighting at several `(a, η)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub x1: f64,
    pub min: f64,
    /// Occupation integrals `∫ρ_ε(X_s − η)ds`, one per kernel width.
    pub occupation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEnsemble {
    pub a: f64,
    pub eta: f64,
    pub kernels: Vec<f64>,
    pub samples: Vec<WeightedSample>,
}

impl WeightedEnsemble {
    /// Girsanov log-weights using kernel `k`.
    pub fn log_weights(&self, k: usize) -> Result<Vec<f64>> {
        self.samples
            .iter()
            .map(|s| Ok(girsanov_weight_from_parts(self.a, self.eta, s.x1, s.min, s.occupation[k])?.log_weight))
            .collect()
    }

    pub fn terminals(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.x1).collect()
    }
}

/// Bessel-3 ensembles for several `(a, η)` targets sharing one 3-d Brownian
/// motion per path.
pub fn bessel3_weighted_ensembles(
    targets: &[(f64, f64)],
    kernels: &[f64],
    grid: &TimeGrid,
    paths: usize,
    seed: &SeedSpec,
) -> Result<Vec<WeightedEnsemble>> {
    if targets.is_empty() || kernels.is_empty() {
        return Err(invalid("targets", "need at least one target and one kernel"));
    }
    let molls: Vec<Mollifier> = kernels.iter().map(|&e| Mollifier::new(e)).collect::<Result<_>>()?;
    let dt = grid.dt();
    let sd = dt.sqrt();
    for &k in kernels {
        if k < sd {
            log::warn!("kernel width {k} below √dt = {sd}; local-time estimate is biased");
        }
    }
    let per_path: Vec<Vec<WeightedSample>> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = seed.replica(p as u64).stream();
            let mut w = [0.0f64; 3];
            let mut occ = vec![vec![0.0; molls.len()]; targets.len()];
            let mut min = vec![f64::INFINITY; targets.len()];
            let mut r = vec![0.0; targets.len()];
            let add = |k: usize, w: &[f64; 3], r: &mut [f64], occ: &mut [Vec<f64>], min: &mut [f64]| {
                let weight = if k == 0 || k == grid.steps() { 0.5 * dt } else { dt };
                for (t, &(a, eta)) in targets.iter().enumerate() {
                    let v = ((a + w[0]).powi(2) + w[1] * w[1] + w[2] * w[2]).sqrt();
                    r[t] = v;
                    min[t] = min[t].min(v);
                    for (j, m) in molls.iter().enumerate() {
                        let d = v - eta;
                        if d.abs() < m.eps {
                            occ[t][j] += weight * m.rho(d);
                        }
                    }
                }
            };
            add(0, &w, &mut r, &mut occ, &mut min);
            for k in 1..=grid.steps() {
                for c in &mut w {
                    *c += sd * rng.normal();
                }
                add(k, &w, &mut r, &mut occ, &mut min);
            }
            (0..targets.len())
                .map(|t| WeightedSample {
                    x1: r[t],
                    min: min[t],
                    occupation: occ[t].clone(),
                })
                .collect()
        })
        .collect();
    Ok(targets
        .iter()
        .enumerate()
        .map(|(t, &(a, eta))| WeightedEnsemble {
            a,
            eta,
            kernels: kernels.to_vec(),
            samples: per_path.iter().map(|p| p[t].clone()).collect(),
        })
        .collect())
}

/// CSV `t,x`.
pub fn path_to_csv(path: &ContinuumPath) -> String {
    let mut out = String::from("t,x\n");
    for (k, v) in path.x.iter().enumerate() {
        let _ = writeln!(out, "{},{}", fmt_real(k as f64 * path.dt), fmt_real(*v));
    }
    out
}

/// CSV `path_id,X_1,local_time,log_weight` using kernel `k`.
pub fn weighted_ensemble_to_csv(ens: &WeightedEnsemble, k: usize) -> Result<String> {
    let lw = ens.log_weights(k)?;
    let mut out = String::from("path_id,X_1,local_time,log_weight\n");
    for (i, (s, w)) in ens.samples.iter().zip(lw).enumerate() {
        let lt = if s.min > ens.eta { 0.0 } else { s.occupation[k] };
        let _ = writeln!(out, "{i},{},{},{}", fmt_real(s.x1), fmt_real(lt), fmt_real(w));
    }
    Ok(out)
}

/// One row of the weak-convergence report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eta: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub ks: f64,
    /// Spread of the KS distance over ten disjoint batches, divided by √10.
    pub ks_se: f64,
}

/// KS distance of `samples` to `cdf` with a batch-spread standard error.
pub fn ks_with_batch_se(samples: &[f64], cdf: impl Fn(f64) -> f64 + Copy) -> Result<(f64, f64)> {
    let ks = crate::stats::ks_statistic(samples, cdf, 1.0)?.statistic;
    let batches = 10;
    let len = samples.len() / batches;
    if len == 0 {
        return Ok((ks, f64::NAN));
    }
    let per: Vec<f64> = samples
        .chunks(len)
        .take(batches)
        .map(|c| crate::stats::ks_statistic(c, cdf, 1.0).map(|r| r.statistic))
        .collect::<Result<_>>()?;
    // the spread of one batch is √10 times that of the full sample
    let e = crate::stats::Estimate::from_samples(&per)?;
    Ok((ks, e.se))
}
