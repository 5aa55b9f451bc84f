use rayon::prelude::*;
use wetting_core::lattice_dynamics::{simulate_ensemble, step_reflected_system, DynamicsState, LatticeRunConfig};
use wetting_core::static_models::{equilibrium_sample, sample_static, ChainSettings, StaticTarget, StripPotential};
use wetting_core::stats::ks_two_sample;
use wetting_core::SeedSpec;

fn pot() -> StripPotential {
    StripPotential::smooth_bump(0.2, 5f64.ln()).unwrap()
}

// Site 4 of N = 8 after microscopic time 1 from a Gibbs start, against the
// Gibbs marginal itself. The projected scheme's boundary bias grows like √dt
// (about 0.03 at dt = 1e-3), hence the small step.
#[test]
fn dynamics_preserve_gibbs_site_marginal() {
    let n = 8;
    let target = StaticTarget::Strip(pot());
    let seed = SeedSpec::new(51, 0, "it-stationarity");
    let dt = 1e-4;
    let evolved: Vec<f64> = (0..100_000u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed.replica(r).stream();
            let mut state = DynamicsState::new(equilibrium_sample(n, &target, &mut rng).unwrap()).unwrap();
            let mut grad = Vec::new();
            for _ in 0..10_000 {
                step_reflected_system(&mut state, &pot(), dt, &mut rng, &mut grad).unwrap();
            }
            state.x.values()[3]
        })
        .collect();
    let (rows, _) = sample_static(
        n,
        &target,
        100_000,
        64,
        ChainSettings::defaults(n),
        &SeedSpec::new(52, 0, "it-gibbs"),
    )
    .unwrap();
    let gibbs: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let ks = ks_two_sample(&evolved, &gibbs, 0.02).unwrap();
    assert!(ks.pass, "{ks:?}");
}

#[test]
fn snapshots_stay_in_the_cone_and_are_stationary() {
    let cfg = LatticeRunConfig {
        n: 8,
        potential: pot(),
        horizon: 0.1,
        obs_times: vec![0.0, 0.05, 0.1],
        dt_micro: None,
    };
    let trajs = simulate_ensemble(&cfg, 4000, &SeedSpec::new(53, 0, "it-rescaled")).unwrap();
    for t in &trajs {
        assert!(t.snapshots.iter().all(|s| s.values().iter().all(|v| *v >= 0.0)));
        assert_eq!(t.complementarity, 0.0);
    }
    let proj = |k: usize| -> Vec<f64> {
        trajs
            .iter()
            .map(|t| {
                let v = t.snapshots[k].values();
                let m = v.len() - 1;
                v.iter().enumerate().map(|(j, y)| y * (std::f64::consts::PI * j as f64 / m as f64).sin()).sum::<f64>() / m as f64
            })
            .collect()
    };
    let ks = ks_two_sample(&proj(0), &proj(1), 1.5 * 1.36 * (2.0 / 4000f64).sqrt()).unwrap();
    assert!(ks.pass, "{ks:?}");
}
