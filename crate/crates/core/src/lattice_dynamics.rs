//! Reflected gradient dynamics for the strip wetting measure,
//!
//! `dX_i = −∂_iℋ_N(X) dt + √2 dW^i + dℓ^i`, `X_i ≥ 0`,
//!
//! integrated by projected Euler, and the diffusively rescaled trajectories
//! `Y^N_t = Φ_N(X(N²t))`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{interpolate_lattice, InterpolatedPath, LatticeField};
use crate::io::fmt_real;
use crate::rng::{NoiseSource, SeedSpec};
use crate::static_models::{equilibrium_sample, StaticTarget, StripPotential};

/// `∂_i` of the Gaussian part `Σ (φ_k − φ_{k−1})²/2`, `i` 0-based.
#[inline]
pub fn gaussian_gradient(phi: &[f64], i: usize) -> f64 {
    let left = if i == 0 { 0.0 } else { phi[i - 1] };
    if i + 1 == phi.len() {
        phi[i] - left
    } else {
        2.0 * phi[i] - left - phi[i + 1]
    }
}

/// `∂_iℋ_N(φ)` for every site.
pub fn grad_potential(field: &LatticeField, pot: &StripPotential) -> Result<Vec<f64>> {
    pot.require_smooth()?;
    let phi = field.values();
    Ok((0..phi.len())
        .map(|i| gaussian_gradient(phi, i) - pot.bump_derivative(phi[i]))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsState {
    pub x: LatticeField,
    /// Accumulated reflection `ℓ^i_t`.
    pub ell: Vec<f64>,
    pub t: f64,
    /// `Σ_steps Σ_i x_i Δℓ_i`.
    pub complementarity: f64,
}

impl DynamicsState {
    pub fn new(x: LatticeField) -> Result<Self> {
        x.check_nonnegative()?;
        let n = x.n();
        Ok(Self {
            x,
            ell: vec![0.0; n],
            t: 0.0,
            complementarity: 0.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepReport {
    /// Sites where `|∂ℋ|·dt > 10·√(2dt)`.
    pub unstable_sites: usize,
    pub clamped_sites: usize,
}

/// Projected Euler step: `x̃ = x − ∂ℋ·dt + √(2dt)ξ`, `x ← max(x̃, 0)`,
/// `ℓ += max(−x̃, 0)`.
pub fn step_reflected_system<R: NoiseSource>(
    state: &mut DynamicsState,
    pot: &StripPotential,
    dt: f64,
    noise: &mut R,
    grad: &mut Vec<f64>,
) -> Result<StepReport> {
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    pot.require_smooth()?;
    let phi = state.x.values();
    grad.clear();
    grad.extend((0..phi.len()).map(|i| gaussian_gradient(phi, i) - pot.bump_derivative(phi[i])));
    let sd = (2.0 * dt).sqrt();
    let mut report = StepReport::default();
    let values = state.x.values_mut();
    for i in 0..values.len() {
        if grad[i].abs() * dt > 10.0 * sd {
            report.unstable_sites += 1;
        }
        let tilde = values[i] - grad[i] * dt + sd * noise.normal();
        if tilde < 0.0 {
            values[i] = 0.0;
            state.ell[i] -= tilde;
            report.clamped_sites += 1;
            state.complementarity += values[i] * (-tilde);
        } else {
            values[i] = tilde;
        }
    }
    state.t += dt;
    if report.unstable_sites > 0 {
        log::warn!(
            "step size {dt} too large: drift dominates noise tenfold at {} sites",
            report.unstable_sites
        );
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledTrajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub snapshots: Vec<InterpolatedPath>,
    pub equilibrium_start: bool,
    pub complementarity: f64,
    pub unstable_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeRunConfig {
    pub n: usize,
    pub potential: StripPotential,
    pub horizon: f64,
    pub obs_times: Vec<f64>,
    /// Microscopic step; `None` means `10⁻³`, i.e. `10⁻³/N²` in rescaled time.
    pub dt_micro: Option<f64>,
}

pub const DEFAULT_DT_MICRO: f64 = 1e-3;

impl LatticeRunConfig {
    pub fn dt_micro(&self) -> f64 {
        self.dt_micro.unwrap_or(DEFAULT_DT_MICRO)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n", "need at least one site"));
        }
        self.potential.require_smooth()?;
        if !(self.horizon > 0.0) {
            return Err(invalid("T", "horizon must be positive"));
        }
        let dt = self.dt_micro();
        if !(dt > 0.0) {
            return Err(invalid("dt_micro", "must be positive"));
        }
        if self.obs_times.is_empty() {
            return Err(invalid("obs_times", "need at least one observation time"));
        }
        let nn = (self.n * self.n) as f64;
        for w in self.obs_times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(invalid("obs_times", "must be strictly increasing"));
            }
            if dt / nn > w[1] - w[0] {
                return Err(invalid(
                    "dt_micro",
                    format!("rescaled step {} exceeds observation spacing {}", dt / nn, w[1] - w[0]),
                ));
            }
        }
        if self.obs_times[0] < 0.0 || *self.obs_times.last().unwrap() > self.horizon + 1e-12 {
            return Err(invalid("obs_times", "must lie in [0, T]"));
        }
        Ok(())
    }
}

/// Integrates over microscopic time `[0, N²T]` and records
/// `Φ_N(X(N²t_k))` at the observation times.
pub fn simulate_rescaled<R: NoiseSource>(
    cfg: &LatticeRunConfig,
    init: LatticeField,
    equilibrium_start: bool,
    noise: &mut R,
) -> Result<RescaledTrajectory> {
    cfg.validate()?;
    if init.n() != cfg.n {
        return Err(invalid("init", format!("has {} sites, expected {}", init.n(), cfg.n)));
    }
    if !equilibrium_start {
        log::warn!("lattice run started away from equilibrium; increment bounds assume stationarity");
    }
    let nn = (cfg.n * cfg.n) as f64;
    let dt = cfg.dt_micro();
    let mut state = DynamicsState::new(init)?;
    let mut grad = Vec::with_capacity(cfg.n);
    let mut snapshots = Vec::with_capacity(cfg.obs_times.len());
    let mut steps_done: u64 = 0;
    let mut unstable_steps = 0;
    for &t in &cfg.obs_times {
        let target = (t * nn / dt).round() as u64;
        while steps_done < target {
            if step_reflected_system(&mut state, &cfg.potential, dt, noise, &mut grad)?.unstable_sites > 0 {
                unstable_steps += 1;
            }
            steps_done += 1;
        }
        snapshots.push(interpolate_lattice(&state.x, cfg.n)?);
    }
    Ok(RescaledTrajectory {
        n: cfg.n,
        times: cfg.obs_times.clone(),
        snapshots,
        equilibrium_start,
        complementarity: state.complementarity,
        unstable_steps,
    })
}

/// Independent replicas, each started from an equilibrium Gibbs draw.
pub fn simulate_ensemble(cfg: &LatticeRunConfig, replicas: usize, seed: &SeedSpec) -> Result<Vec<RescaledTrajectory>> {
    cfg.validate()?;
    let target = StaticTarget::Strip(cfg.potential);
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed.replica(r as u64).stream();
            let init = equilibrium_sample(cfg.n, &target, &mut rng)?;
            simulate_rescaled(cfg, init, true, &mut rng)
        })
        .collect()
}

/// CSV `t,site,value` with the unscaled heights `√N·Y^N_t(i/N)`.
pub fn trajectory_to_csv(traj: &RescaledTrajectory) -> String {
    let mut out = String::from("t,site,value\n");
    let scale = (traj.n as f64).sqrt();
    for (t, snap) in traj.times.iter().zip(&traj.snapshots) {
        for (i, v) in snap.values().iter().enumerate().skip(1) {
            let _ = writeln!(out, "{},{},{}", fmt_real(*t), i, fmt_real(v * scale));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeManifest {
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt_micro: f64,
    pub seed: u64,
    pub obs_times: Vec<f64>,
}

impl LatticeManifest {
    pub fn new(cfg: &LatticeRunConfig, seed: u64) -> Self {
        Self {
            n: cfg.n,
            horizon: cfg.horizon,
            dt_micro: cfg.dt_micro(),
            seed,
            obs_times: cfg.obs_times.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ZeroNoise;

    fn bump(a: f64, beta: f64) -> StripPotential {
        StripPotential::smooth_bump(a, beta).unwrap()
    }

    #[test]
    fn gradient_examples() {
        let lin = LatticeField::new((1..=5).map(|i| 0.3 * i as f64).collect()).unwrap();
        let g = grad_potential(&lin, &bump(0.2, 0.0)).unwrap();
        let expect = [0.0, 0.0, 0.0, 0.0, 0.3];
        assert!(g.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-14), "{g:?}");
        let z = grad_potential(&LatticeField::zeros(4).unwrap(), &bump(0.2, 0.0)).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let one = grad_potential(&LatticeField::new(vec![2.0]).unwrap(), &bump(0.5, 1.0)).unwrap();
        assert_eq!(one, vec![2.0]);
    }

    #[test]
    fn zero_noise_step_is_gradient_descent() {
        let pot = bump(0.5, 1.0);
        let x = LatticeField::new(vec![1.0, 0.3, 2.0]).unwrap();
        let g = grad_potential(&x, &pot).unwrap();
        let mut s = DynamicsState::new(x.clone()).unwrap();
        let dt = 1e-3;
        step_reflected_system(&mut s, &pot, dt, &mut ZeroNoise, &mut Vec::new()).unwrap();
        for ((new, old), gi) in s.x.values().iter().zip(x.values()).zip(&g) {
            assert!((new - (old - dt * gi)).abs() < 1e-15);
        }
        assert!(s.ell.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn projection_identity_at_the_wall() {
        let dt = 1e-2;
        let seed = SeedSpec::new(1, 0, "proj");
        let mut s = DynamicsState::new(LatticeField::zeros(16).unwrap()).unwrap();
        step_reflected_system(&mut s, &bump(0.3, 0.0), dt, &mut seed.stream(), &mut Vec::new()).unwrap();
        let mut noise = seed.stream();
        for i in 0..16 {
            let inc = (2.0 * dt).sqrt() * noise.normal();
            assert_eq!(s.x.values()[i], inc.max(0.0));
            assert_eq!(s.ell[i], (-inc).max(0.0));
            assert!((s.x.values()[i] == 0.0) != (s.ell[i] == 0.0));
        }
        assert_eq!(s.complementarity, 0.0);
    }

    #[test]
    fn large_steps_are_flagged() {
        let pot = bump(0.5, 0.0);
        let x = LatticeField::new(vec![1000.0, 0.0]).unwrap();
        let mut s = DynamicsState::new(x).unwrap();
        let r = step_reflected_system(&mut s, &pot, 1.0, &mut ZeroNoise, &mut Vec::new()).unwrap();
        assert!(r.unstable_sites > 0);
        assert!(step_reflected_system(&mut s, &pot, 0.0, &mut ZeroNoise, &mut Vec::new()).is_err());
    }

    #[test]
    fn single_observation_at_zero_returns_the_initial_field() {
        let cfg = LatticeRunConfig {
            n: 4,
            potential: bump(0.2, 5f64.ln()),
            horizon: 0.1,
            obs_times: vec![0.0],
            dt_micro: None,
        };
        let init = LatticeField::new(vec![0.5, 1.0, 0.2, 3.0]).unwrap();
        let tr = simulate_rescaled(&cfg, init.clone(), true, &mut SeedSpec::new(1, 0, "x").stream()).unwrap();
        assert_eq!(tr.snapshots.len(), 1);
        assert_eq!(tr.snapshots[0], interpolate_lattice(&init, 4).unwrap());
    }

    #[test]
    fn config_validation() {
        let mut cfg = LatticeRunConfig {
            n: 8,
            potential: bump(0.2, 1.0),
            horizon: 0.1,
            obs_times: vec![0.0, 0.05],
            dt_micro: Some(1e-3),
        };
        assert!(cfg.validate().is_ok());
        cfg.obs_times = vec![0.0, 0.2];
        assert!(cfg.validate().is_err());
        cfg.obs_times = vec![0.0, 1e-5];
        assert!(cfg.validate().is_err());
        cfg.obs_times = vec![0.05, 0.01];
        assert!(cfg.validate().is_err());
    }
}
