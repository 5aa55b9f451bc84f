use rayon::prelude::*;
use wetting_core::continuum::{squared_terminal_values, terminal_values, ContinuumConfig};
use wetting_core::static_models::{sample_meander_direct, sample_reference_path, ReferenceKind, ReferencePathLaw};
use wetting_core::stats::{
    bessel3_cdf, cdf_order_check, ks_noise_threshold, ks_statistic, rayleigh_cdf, reflecting_bm_cdf, Estimate,
};
use wetting_core::{SeedSpec, TimeGrid};

// E[e^{-R}] for R Rayleigh and E[e^{-X}] for X Maxwell (Bessel-3 at time 1).
const MEANDER_EXP: f64 = 0.344_320_457_58;
const BESSEL3_EXP: f64 = 0.248_428_606_66;

fn bessel3_terminals(n: usize, seed: &SeedSpec) -> Vec<f64> {
    let law = ReferencePathLaw::new(ReferenceKind::Bessel3, 0.0, TimeGrid::new(0.0, 1.0, 1).unwrap()).unwrap();
    (0..n)
        .into_par_iter()
        .map(|i| sample_reference_path(&law, &mut seed.replica(i as u64).stream()).terminal())
        .collect()
}

#[test]
fn bessel3_endpoint_matches_maxwell_law() {
    let x = bessel3_terminals(100_000, &SeedSpec::new(41, 0, "it-bessel3"));
    let ks = ks_statistic(&x, |v| bessel3_cdf(1.0, v), ks_noise_threshold(x.len())).unwrap();
    assert!(ks.pass, "{ks:?}");
    let f: Vec<f64> = x.iter().map(|v| (-v).exp()).collect();
    let e = Estimate::from_samples(&f).unwrap();
    assert!(e.compatible_with(BESSEL3_EXP, 4.0), "{e:?}");
}

#[test]
fn imhof_weight_turns_bessel3_into_meander() {
    let x = bessel3_terminals(100_000, &SeedSpec::new(42, 0, "it-imhof"));
    let c = (std::f64::consts::PI / 2.0).sqrt();
    let f: Vec<f64> = x.iter().map(|v| c / v * (-v).exp()).collect();
    let e = Estimate::from_samples(&f).unwrap();
    assert!(e.compatible_with(MEANDER_EXP, 4.0), "{e:?}");
}

#[test]
fn direct_meander_endpoint_is_rayleigh() {
    let grid = TimeGrid::unit_with_step(1.0 / 64.0).unwrap();
    let seed = SeedSpec::new(43, 0, "it-meander");
    let x: Vec<f64> = (0..50_000)
        .into_par_iter()
        .map(|i| *sample_meander_direct(&grid, &mut seed.replica(i as u64).stream()).last().unwrap())
        .collect();
    let ks = ks_statistic(&x, rayleigh_cdf, ks_noise_threshold(x.len())).unwrap();
    assert!(ks.pass, "{ks:?}");
    let f: Vec<f64> = x.iter().map(|v| (-v).exp()).collect();
    assert!(Estimate::from_samples(&f).unwrap().compatible_with(MEANDER_EXP, 4.0));
}

#[test]
fn squared_bessel_one_is_reflecting_bm_squared() {
    let grid = TimeGrid::unit_with_step(1e-3).unwrap();
    let z = squared_terminal_values(0.0, 0.0, &grid, 40_000, &SeedSpec::new(44, 0, "it-besq1")).unwrap();
    let x: Vec<f64> = z.iter().map(|v| v.sqrt()).collect();
    let ks = ks_statistic(&x, |v| reflecting_bm_cdf(1.0, v), ks_noise_threshold(x.len())).unwrap();
    assert!(ks.pass, "{ks:?}");
}

#[test]
fn smaller_strip_is_stochastically_smaller() {
    let grid = TimeGrid::unit_with_step(1e-3).unwrap();
    let seed = SeedSpec::new(45, 0, "it-order");
    let low = terminal_values(&ContinuumConfig::new(0.0, 0.1, None, grid).unwrap(), 20_000, &seed).unwrap();
    let high = terminal_values(&ContinuumConfig::new(0.0, 0.5, None, grid).unwrap(), 20_000, &seed).unwrap();
    assert!(cdf_order_check(&low, &high, 0.01).unwrap().pass);
    let ml = Estimate::from_samples(&low).unwrap();
    let mh = Estimate::from_samples(&high).unwrap();
    assert!(mh.mean > ml.mean);
}

#[test]
fn truncated_process_approaches_reflecting_bm() {
    let grid = TimeGrid::unit_with_step(1e-3).unwrap();
    let seed = SeedSpec::new(46, 0, "it-limit");
    let ks = |eta: f64| {
        let x = terminal_values(&ContinuumConfig::new(0.0, eta, None, grid).unwrap(), 20_000, &seed).unwrap();
        ks_statistic(&x, |v| reflecting_bm_cdf(1.0, v), 1.0).unwrap().statistic
    };
    let (k4, k1) = (ks(0.4), ks(0.1));
    assert!(k1 < k4, "{k1} vs {k4}");
    assert!(k1 < 0.08, "{k1}");
}
