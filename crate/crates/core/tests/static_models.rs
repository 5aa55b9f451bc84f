use wetting_core::static_models::{
    pinning_kernel_invariance_l1, sample_static, strip_kernel_invariance_l1, ChainSettings, PotentialShape,
    StaticTarget, StripPotential,
};
use wetting_core::stats::Estimate;
use wetting_core::SeedSpec;

#[test]
fn samples_are_nonnegative_for_every_target() {
    let targets = [
        StaticTarget::Strip(StripPotential::smooth_bump(0.2, 5f64.ln()).unwrap()),
        StaticTarget::Strip(StripPotential::new(0.5, -1.0, PotentialShape::SmoothBump).unwrap()),
        StaticTarget::Pinning { beta: 0.5 },
    ];
    for (k, t) in targets.iter().enumerate() {
        let (rows, _) = sample_static(6, t, 2000, 4, ChainSettings::defaults(6), &SeedSpec::new(71, k as u64, "it-static")).unwrap();
        assert_eq!(rows.len(), 2000);
        assert!(rows.iter().flatten().all(|v| *v >= 0.0));
    }
}

// A single site has the wall-pinned left neighbour and a free right end:
// P(atom) = 1/(1 + √(π/2)) at β = 0.
#[test]
fn single_site_pinning_atom_frequency() {
    let (rows, _) = sample_static(
        1,
        &StaticTarget::Pinning { beta: 0.0 },
        200_000,
        16,
        ChainSettings::defaults(1),
        &SeedSpec::new(72, 0, "it-atom"),
    )
    .unwrap();
    let atoms: Vec<f64> = rows.iter().map(|r| if r[0] == 0.0 { 1.0 } else { 0.0 }).collect();
    let e = Estimate::from_samples(&atoms).unwrap();
    let p = 1.0 / (1.0 + std::f64::consts::FRAC_PI_2.sqrt());
    assert!(e.compatible_with(p, 4.0), "{e:?} vs {p}");
}

#[test]
fn indicator_strip_is_refused_by_the_sampler() {
    let t = StaticTarget::Strip(StripPotential::new(0.5, 1.0, PotentialShape::Indicator).unwrap());
    assert!(sample_static(4, &t, 10, 1, ChainSettings::defaults(4), &SeedSpec::new(73, 0, "it-ind")).is_err());
}

#[test]
fn gibbs_kernels_leave_targets_invariant() {
    for (a, beta) in [(0.3, 0.7), (1.0, -1.2)] {
        let pot = StripPotential::smooth_bump(a, beta).unwrap();
        assert!(strip_kernel_invariance_l1(&pot).unwrap() < 1e-6);
    }
    assert!(pinning_kernel_invariance_l1(2.0).unwrap() < 1e-6);
}
