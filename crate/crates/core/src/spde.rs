//! Finite-difference integrator for the reflected stochastic heat equation
//! with attraction at level `η`,
//!
//! `∂_t u = ½∂²_x u + ξ + ζ + ρ_ε′(u − η)/(4η)`, `u ≥ 0`, `∫u dζ = 0`,
//!
//! on `[0, 1]` with `u(0) = a` and a free (Neumann) end at `x = 1`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuum::{log_boundary_factor, occupation_integral, Mollifier};
use crate::error::{invalid, Result, WettingError};
use crate::io::fmt_real;
use crate::rng::{NoiseSource, SeedSpec};
use crate::stats::Estimate;

/// `∂_u log(1 − e^{−2uv/Δx})/(2Δx)` for a node at `u` next to one at `v`;
/// `u` is evaluated no lower than `floor`. Tends to `1/(2Δx·u)` as `v → 0`.
pub fn bridge_drift(u: f64, v: f64, dx: f64, floor: f64) -> f64 {
    let u = u.max(floor);
    let p = 2.0 * u * v / dx;
    if p > 40.0 {
        return 0.0;
    }
    let ratio = if p < 1e-12 { 1.0 } else { p / p.exp_m1() };
    ratio / (2.0 * dx * u)
}

/// `ρ_ε′(u − η)/(4η)`.
pub fn attraction_drift(u: f64, eta: f64, m: &Mollifier) -> f64 {
    m.rho_prime(u - eta) / (4.0 * eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdeConfig {
    pub n_space: usize,
    pub dt: f64,
    pub eta: f64,
    pub eps: f64,
    /// Clamped value `u(0)`.
    pub a: f64,
    /// Switches the attraction term off (the ε-disabled comparison run).
    pub attraction: bool,
    /// Endpoint drift `1{u_n < η}/(2Δx·u_n)`, which supplies the
    /// `(X_1∧η)/X_1` factor of the mollified measure against Bessel-3.
    pub endpoint_tilt: bool,
    /// Drift from the log non-crossing probability of the Brownian bridge
    /// between neighbouring nodes, so that the discrete invariant law has
    /// the grid marginals of the continuum law rather than those of a walk
    /// that is positive only at the nodes.
    pub bridge_correction: bool,
}

impl SpdeConfig {
    pub fn new(n_space: usize, dt: f64, eta: f64, eps: f64) -> Result<Self> {
        let cfg = Self {
            n_space,
            dt,
            eta,
            eps,
            a: 0.0,
            attraction: true,
            endpoint_tilt: true,
            bridge_correction: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n_space as f64
    }

    /// Largest stable step `Δx²/4`.
    pub fn max_dt(&self) -> f64 {
        self.dx() * self.dx() / 4.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_space < 2 {
            return Err(invalid("n_space", "need at least two sites"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", "time step must be positive"));
        }
        if self.dt > self.max_dt() * (1.0 + 1e-12) {
            return Err(WettingError::Unstable(format!(
                "dt = {} exceeds Δx²/4 = {}",
                self.dt,
                self.max_dt()
            )));
        }
        if !(self.eta > 0.0) || !(self.eps > 0.0) || !(self.eps < self.eta) {
            return Err(invalid(
                "eps",
                format!("need 0 < eps < eta, got eps = {}, eta = {}", self.eps, self.eta),
            ));
        }
        if !(self.a >= 0.0) {
            return Err(invalid("a", "boundary value must be nonnegative"));
        }
        Ok(())
    }

    /// Evaluation floor for the boundary drifts: one noise standard deviation.
    pub fn tilt_floor(&self) -> f64 {
        (self.dt / self.dx()).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdeState {
    /// `u(iΔx)`, `i = 1..=n_space`.
    pub u: Vec<f64>,
    pub zeta_mass: Vec<f64>,
    pub t: f64,
    /// Running `Σ_steps Σ_i u_i·Δζ_i`.
    pub complementarity: f64,
    pub clamp_events: u64,
}

impl SpdeState {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if let Some(i) = u.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("u", format!("initial value at site {} is {}", i + 1, u[i])));
        }
        let n = u.len();
        Ok(Self {
            u,
            zeta_mass: vec![0.0; n],
            t: 0.0,
            complementarity: 0.0,
            clamp_events: 0,
        })
    }

    pub fn constant(n_space: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n_space])
    }

    pub fn endpoint(&self) -> f64 {
        self.u[self.u.len() - 1]
    }
}

/// Scratch buffers and derived constants for repeated steps.
pub struct SpdeStepper {
    cfg: SpdeConfig,
    mollifier: Mollifier,
    noise: Vec<f64>,
    next: Vec<f64>,
}

impl SpdeStepper {
    pub fn new(cfg: SpdeConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            mollifier: Mollifier::new(cfg.eps)?,
            noise: vec![0.0; cfg.n_space],
            next: vec![0.0; cfg.n_space],
        })
    }

    pub fn config(&self) -> &SpdeConfig {
        &self.cfg
    }

    /// One projected explicit Euler step.
    pub fn step<R: NoiseSource>(&mut self, state: &mut SpdeState, rng: &mut R) -> Result<()> {
        let n = self.cfg.n_space;
        if state.u.len() != n || state.zeta_mass.len() != n {
            return Err(WettingError::GridMismatch {
                resolution: state.u.len(),
                n,
            });
        }
        let c = &self.cfg;
        let dx = c.dx();
        let lap = 0.5 / (dx * dx);
        let sd = (c.dt / dx).sqrt();
        for z in self.noise.iter_mut() {
            *z = sd * rng.normal();
        }
        let u = &state.u;
        let (eta, lo, hi) = (c.eta, c.eta - c.eps, c.eta + c.eps);
        for i in 0..n {
            let left = if i == 0 { c.a } else { u[i - 1] };
            let curv = if i + 1 == n { left - u[i] } else { u[i + 1] + left - 2.0 * u[i] };
            let mut drift = lap * curv;
            if c.attraction && u[i] > lo && u[i] < hi {
                drift += attraction_drift(u[i], eta, &self.mollifier);
            }
            if c.bridge_correction {
                drift += bridge_drift(u[i], left, dx, c.tilt_floor());
                if i + 1 < n {
                    drift += bridge_drift(u[i], u[i + 1], dx, c.tilt_floor());
                }
            }
            if i + 1 == n && c.endpoint_tilt && u[i] < eta {
                drift += 0.5 / (dx * u[i].max(c.tilt_floor()));
            }
            self.next[i] = u[i] + c.dt * drift + self.noise[i];
        }
        for i in 0..n {
            let pre = self.next[i];
            let v = pre.max(0.0);
            let dz = (-pre).max(0.0);
            state.u[i] = v;
            if dz > 0.0 {
                state.zeta_mass[i] += dz;
                state.clamp_events += 1;
            }
            state.complementarity += v * dz;
        }
        state.t += c.dt;
        Ok(())
    }
}

/// Convenience single step; allocates a stepper.
pub fn step_spde<R: NoiseSource>(state: &mut SpdeState, cfg: &SpdeConfig, rng: &mut R) -> Result<()> {
    SpdeStepper::new(*cfg)?.step(state, rng)
}

/// `Σ u_i·Δζ_i` accumulated over the run.
pub fn complementarity_report(state: &SpdeState) -> f64 {
    state.complementarity
}

/// Discretized path on `iΔx` drawn from the mollified static measure by
/// importance resampling of Bessel-3 paths, used as a near-stationary start.
pub fn oracle_initial_fields(cfg: &SpdeConfig, count: usize, pool: usize, seed: &SeedSpec) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if pool == 0 || count == 0 {
        return Err(invalid("replicas", "need a positive pool and count"));
    }
    let n = cfg.n_space;
    let dx = cfg.dx();
    let m = Mollifier::new(cfg.eps)?;
    let candidates: Vec<(Vec<f64>, f64)> = (0..pool)
        .into_par_iter()
        .map(|p| {
            let mut rng = seed.labeled("spde-init-pool").replica(p as u64).stream();
            let mut b = [cfg.a, 0.0, 0.0];
            let mut path = Vec::with_capacity(n + 1);
            path.push(cfg.a);
            let sd = dx.sqrt();
            for _ in 0..n {
                for c in &mut b {
                    *c += sd * rng.normal();
                }
                path.push((b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt());
            }
            let lw = log_boundary_factor(cfg.a, cfg.eta, path[n])?
                + if cfg.attraction {
                    occupation_integral(&path, dx, cfg.eta, &m) / (2.0 * cfg.eta)
                } else {
                    0.0
                };
            Ok((path[1..].to_vec(), lw))
        })
        .collect::<Result<_>>()?;
    let top = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let mut cum = Vec::with_capacity(pool);
    let mut acc = 0.0;
    for c in &candidates {
        acc += (c.1 - top).exp();
        cum.push(acc);
    }
    let mut rng = seed.labeled("spde-init-resample").stream();
    let offset = rng.uniform();
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    for k in 0..count {
        let target = (k as f64 + offset) / count as f64 * acc;
        while cum[j] < target && j + 1 < pool {
            j += 1;
        }
        out.push(candidates[j].0.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdeRunSettings {
    pub replicas: usize,
    /// Model time discarded before recording.
    pub burn_in: f64,
    /// Model time between recorded endpoint values.
    pub record_every: f64,
    pub records: usize,
}

impl SpdeRunSettings {
    fn steps(&self, dt: f64) -> Result<(usize, usize)> {
        if self.replicas == 0 || self.records == 0 {
            return Err(invalid("replicas", "need at least one replica and one record"));
        }
        if !(self.burn_in >= 0.0) || !(self.record_every > 0.0) {
            return Err(invalid("record_every", "burn-in must be nonnegative, spacing positive"));
        }
        Ok(((self.burn_in / dt).round() as usize, ((self.record_every / dt).round() as usize).max(1)))
    }
}

/// Summary of one replica after burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub endpoint_records: Vec<f64>,
    /// Fraction of post-burn-in steps with `u(1) ∈ (η−ε, η+ε)`.
    pub window_fraction: f64,
    pub complementarity: f64,
    pub min_u: f64,
    pub clamp_events: u64,
    pub final_state: SpdeState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdeEnsemble {
    pub config: SpdeConfig,
    pub settings: SpdeRunSettings,
    pub replicas: Vec<ReplicaSummary>,
}

impl SpdeEnsemble {
    pub fn endpoint_samples(&self) -> Vec<f64> {
        self.replicas.iter().flat_map(|r| r.endpoint_records.iter().copied()).collect()
    }

    pub fn complementarity(&self) -> f64 {
        self.replicas.iter().map(|r| r.complementarity).sum()
    }

    pub fn min_u(&self) -> f64 {
        self.replicas.iter().map(|r| r.min_u).fold(f64::INFINITY, f64::min)
    }

    pub fn window_fraction(&self) -> Result<Estimate> {
        let f: Vec<f64> = self.replicas.iter().map(|r| r.window_fraction).collect();
        Estimate::from_samples(&f)
    }
}

/// Runs independent replicas from the given initial fields (recycled if
/// fewer than `settings.replicas`).
pub fn run_ensemble(cfg: &SpdeConfig, settings: &SpdeRunSettings, init: &[Vec<f64>], seed: &SeedSpec) -> Result<SpdeEnsemble> {
    cfg.validate()?;
    let (burn, every) = settings.steps(cfg.dt)?;
    if init.is_empty() {
        return Err(invalid("init", "no initial fields"));
    }
    let (lo, hi) = (cfg.eta - cfg.eps, cfg.eta + cfg.eps);
    let replicas = (0..settings.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed.labeled("spde-noise").replica(r as u64).stream();
            let mut stepper = SpdeStepper::new(*cfg)?;
            let mut state = SpdeState::new(init[r % init.len()].clone())?;
            let mut min_u = f64::INFINITY;
            let mut inside = 0usize;
            let mut counted = 0usize;
            let mut records = Vec::with_capacity(settings.records);
            let total = burn + every * settings.records;
            for k in 1..=total {
                stepper.step(&mut state, &mut rng)?;
                min_u = state.u.iter().copied().fold(min_u, f64::min);
                if k > burn {
                    let e = state.endpoint();
                    counted += 1;
                    if e > lo && e < hi {
                        inside += 1;
                    }
                    if (k - burn) % every == 0 {
                        records.push(e);
                    }
                }
            }
            Ok(ReplicaSummary {
                endpoint_records: records,
                window_fraction: inside as f64 / counted.max(1) as f64,
                complementarity: state.complementarity,
                min_u,
                clamp_events: state.clamp_events,
                final_state: state,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpdeEnsemble {
        config: *cfg,
        settings: *settings,
        replicas,
    })
}

/// CSV snapshot `t,x,u`, including the clamped `x = 0` node.
pub fn snapshot_to_csv(state: &SpdeState, cfg: &SpdeConfig) -> String {
    let mut out = String::from("t,x,u\n");
    let dx = cfg.dx();
    let t = fmt_real(state.t);
    let _ = writeln!(out, "{t},{},{}", fmt_real(0.0), fmt_real(cfg.a));
    for (i, v) in state.u.iter().enumerate() {
        let _ = writeln!(out, "{t},{},{}", fmt_real((i + 1) as f64 * dx), fmt_real(*v));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdeManifest {
    pub n_space: usize,
    pub dt: f64,
    pub eta: f64,
    pub eps: f64,
    pub seed: u64,
    pub steps: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ZeroNoise;

    fn cfg(n: usize) -> SpdeConfig {
        let dx = 1.0 / n as f64;
        SpdeConfig::new(n, dx * dx / 8.0, 0.5, 0.1).unwrap()
    }

    #[test]
    fn bridge_drift_limits() {
        let dx = 1.0 / 64.0;
        let d = bridge_drift(0.2, 0.0, dx, 1e-3);
        assert!((d - 1.0 / (2.0 * dx * 0.2)).abs() < 1e-12 * d);
        let h = 1e-6;
        let g = |u: f64| (-(-2.0 * u * 0.1 / dx).exp()).ln_1p();
        let fd = (g(0.05 + h) - g(0.05 - h)) / (2.0 * h) / (2.0 * dx);
        assert!((bridge_drift(0.05, 0.1, dx, 1e-3) - fd).abs() < 1e-6 * fd);
        assert_eq!(bridge_drift(1.0, 1.0, dx, 1e-3), 0.0);
        let near = bridge_drift(0.5, 0.5, dx, 1e-3);
        assert!(near > 0.0 && near < 1e-10);
        assert_eq!(bridge_drift(0.0, 0.3, dx, 0.01), bridge_drift(0.01, 0.3, dx, 0.01));
    }

    #[test]
    fn attraction_sign_and_support() {
        let m = Mollifier::new(0.1).unwrap();
        assert_eq!(attraction_drift(0.5, 0.5, &m), 0.0);
        assert_eq!(attraction_drift(0.7, 0.5, &m), 0.0);
        assert!(attraction_drift(0.45, 0.5, &m) > 0.0);
        assert!(attraction_drift(0.55, 0.5, &m) < 0.0);
        let l = attraction_drift(0.47, 0.5, &m);
        assert!((l + attraction_drift(0.53, 0.5, &m)).abs() < 1e-12 * l.abs());
    }

    #[test]
    fn constant_eta_is_fixed_without_tilt() {
        let mut c = cfg(16);
        c.endpoint_tilt = false;
        c.bridge_correction = false;
        let mut s = SpdeState::constant(16, 0.5).unwrap();
        c.a = 0.5;
        step_spde(&mut s, &c, &mut ZeroNoise).unwrap();
        assert!(s.u.iter().all(|&v| v == 0.5));
        assert!(s.zeta_mass.iter().all(|&z| z == 0.0));
        assert_eq!(complementarity_report(&s), 0.0);
    }

    #[test]
    fn clamping_is_local() {
        let mut c = cfg(8);
        c.endpoint_tilt = false;
        c.bridge_correction = false;
        c.attraction = false;
        let mut s = SpdeState::constant(8, 1.0).unwrap();
        let mut noise = FixedNoise { at: 3, value: -50.0, n: 8, k: 0 };
        SpdeStepper::new(c).unwrap().step(&mut s, &mut noise).unwrap();
        assert_eq!(s.u[3], 0.0);
        for (i, z) in s.zeta_mass.iter().enumerate() {
            assert_eq!(*z > 0.0, i == 3, "site {i}");
        }
        assert_eq!(s.complementarity, 0.0);
    }

    struct FixedNoise {
        at: usize,
        value: f64,
        n: usize,
        k: usize,
    }

    impl NoiseSource for FixedNoise {
        fn normal(&mut self) -> f64 {
            let i = self.k % self.n;
            self.k += 1;
            if i == self.at {
                self.value
            } else {
                0.0
            }
        }
        fn uniform(&mut self) -> f64 {
            0.5
        }
    }

    #[test]
    fn stability_guard() {
        let c = cfg(16);
        let mut bad = c;
        bad.dt = 2.0 * c.max_dt();
        assert!(bad.validate().is_err());
        let mut s = SpdeState::constant(16, 0.3).unwrap();
        assert!(step_spde(&mut s, &bad, &mut ZeroNoise).is_err());
        assert!(SpdeConfig::new(16, 1e-4, 0.1, 0.1).is_err());
    }

    #[test]
    fn noisy_run_stays_nonnegative_with_zero_complementarity() {
        let c = cfg(16);
        let settings = SpdeRunSettings {
            replicas: 4,
            burn_in: 0.01,
            record_every: 0.01,
            records: 5,
        };
        let init = vec![vec![0.0; 16]];
        let e = run_ensemble(&c, &settings, &init, &SeedSpec::new(4, 0, "t")).unwrap();
        assert!(e.min_u() >= 0.0);
        assert_eq!(e.complementarity(), 0.0);
        assert!(e.replicas.iter().any(|r| r.clamp_events > 0));
        assert_eq!(e.endpoint_samples().len(), 20);
        for r in &e.replicas {
            assert!(r.final_state.zeta_mass.iter().all(|&z| z >= 0.0));
        }
    }

    #[test]
    fn oracle_init_shapes() {
        let c = cfg(8);
        let f = oracle_initial_fields(&c, 10, 50, &SeedSpec::new(1, 0, "i")).unwrap();
        assert_eq!(f.len(), 10);
        assert!(f.iter().all(|p| p.len() == 8 && p.iter().all(|&v| v >= 0.0)));
    }

    #[test]
    fn snapshot_csv_layout() {
        let c = cfg(4);
        let s = SpdeState::constant(4, 0.25).unwrap();
        let csv = snapshot_to_csv(&s, &c);
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with("t,x,u\n"));
    }
}
