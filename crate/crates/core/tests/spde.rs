use wetting_core::spde::{oracle_initial_fields, run_ensemble, SpdeConfig, SpdeRunSettings};
use wetting_core::SeedSpec;

fn settings() -> SpdeRunSettings {
    SpdeRunSettings {
        replicas: 200,
        burn_in: 0.5,
        record_every: 0.25,
        records: 4,
    }
}

#[test]
fn attraction_localizes_the_endpoint_near_eta() {
    let n = 16;
    let dx = 1.0 / n as f64;
    let on = SpdeConfig::new(n, dx * dx / 8.0, 0.5, 0.1).unwrap();
    let off = SpdeConfig { attraction: false, ..on };
    let seed = SeedSpec::new(61, 0, "it-spde-window");
    let init = oracle_initial_fields(&on, 200, 800, &seed).unwrap();
    let w_on = run_ensemble(&on, &settings(), &init, &seed).unwrap().window_fraction().unwrap();
    let w_off = run_ensemble(&off, &settings(), &init, &seed).unwrap().window_fraction().unwrap();
    let diff = w_on.minus(&w_off);
    assert!(diff.mean > 3.0 * diff.se, "{w_on:?} vs {w_off:?}");
}

#[test]
fn runs_are_nonnegative_with_exact_complementarity() {
    let n = 16;
    let dx = 1.0 / n as f64;
    let cfg = SpdeConfig::new(n, dx * dx / 4.0, 0.3, 0.05).unwrap();
    let init = vec![vec![0.0; n]];
    let ens = run_ensemble(&cfg, &settings(), &init, &SeedSpec::new(62, 0, "it-spde-zero")).unwrap();
    assert_eq!(ens.complementarity(), 0.0);
    assert!(ens.min_u() >= 0.0);
    assert!(ens.replicas.iter().any(|r| r.clamp_events > 0));
}

#[test]
fn unstable_step_is_refused() {
    let n = 16;
    let dx = 1.0 / n as f64;
    assert!(SpdeConfig::new(n, dx * dx / 2.0, 0.5, 0.1).is_err());
}
