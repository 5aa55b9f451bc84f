//! Statistical verdicts: Monte Carlo estimates, KS distances, CDF ordering,
//! weighted-mean tests and the increment-moment (tightness) table.
//!
//! Every stochastic test uses the same rule: an estimate is compatible with
//! its target when the gap is at most `K_SE` standard errors.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, WettingError};
use crate::lattice_dynamics::RescaledTrajectory;
use crate::spectral::{sine_coefficients, SpectralVector};

/// Number of standard errors in every stochastic decision.
pub const K_SE: f64 = 3.0;
/// Number of quantile levels for CDF comparisons.
pub const QUANTILE_GRID: usize = 200;
/// Minimum effective sample size for weighted estimates.
pub const MIN_ESS: f64 = 100.0;
/// Minimum replica count for a trustworthy increment-moment row.
pub const MIN_REPLICAS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(WettingError::EmptySample);
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Ok(Self { mean, se: 0.0, n });
        }
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(Self {
            mean,
            se: (var / n as f64).sqrt(),
            n,
        })
    }

    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            se: 0.0,
            n: 1,
        }
    }

    /// `|mean − target| ≤ k·se`.
    pub fn compatible_with(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }

    /// Difference of two independent estimates.
    pub fn minus(&self, other: &Self) -> Self {
        Self {
            mean: self.mean - other.mean,
            se: self.se.hypot(other.se),
            n: self.n.min(other.n),
        }
    }

    /// Number of standard errors between `mean` and `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.se == 0.0 {
            if self.mean == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - target) / self.se
        }
    }
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `P(X_r ≤ x)` for reflecting Brownian motion from 0: `erf(x/√(2r))`.
pub fn reflecting_bm_cdf(r: f64, x: f64) -> f64 {
    debug_assert!(r > 0.0);
    if x < 0.0 {
        log::warn!("reflecting_bm_cdf evaluated at negative height {x}; returning 0");
        return 0.0;
    }
    erf(x / (2.0 * r).sqrt())
}

/// `p¹_r(x) = √(2/(πr)) exp(−x²/(2r))`.
pub fn reflecting_bm_density(r: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    (2.0 / (PI * r)).sqrt() * (-x * x / (2.0 * r)).exp()
}

/// Marginal CDF at time `r` of a 3-dimensional Bessel process from 0.
pub fn bessel3_cdf(r: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let u = x / r.sqrt();
    erf(u / SQRT_2) - FRAC_2_SQRT_PI / SQRT_2 * u * (-u * u / 2.0).exp()
}

/// Rayleigh CDF, the law of the Brownian meander at time 1.
pub fn rayleigh_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x * x / 2.0).exp_m1()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n: usize,
    pub threshold: f64,
    pub pass: bool,
}

impl KsResult {
    fn new(statistic: f64, n: usize, threshold: f64) -> Self {
        Self {
            statistic,
            n,
            threshold,
            pass: statistic <= threshold,
        }
    }
}

/// Threshold for pure-noise KS comparisons: 1.5 times the asymptotic 5%
/// quantile `1.36/√n`.
pub fn ks_noise_threshold(n: usize) -> f64 {
    1.5 * 1.36 / (n as f64).sqrt()
}

/// Sup-distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64, threshold: f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(WettingError::EmptySample);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult::new(d.min(1.0), xs.len(), threshold))
}

/// Weighted empirical CDF over sorted support.
#[derive(Debug, Clone)]
pub struct WeightedEcdf {
    xs: Vec<f64>,
    cum: Vec<f64>,
}

impl WeightedEcdf {
    pub fn new(samples: &[f64], weights: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(WettingError::EmptySample);
        }
        if samples.len() != weights.len() {
            return Err(invalid("weights", "length differs from samples"));
        }
        let mut idx: Vec<usize> = (0..samples.len()).collect();
        idx.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]));
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(invalid("weights", "total weight must be positive and finite"));
        }
        let mut acc = 0.0;
        let mut xs = Vec::with_capacity(idx.len());
        let mut cum = Vec::with_capacity(idx.len());
        for i in idx {
            acc += weights[i];
            xs.push(samples[i]);
            cum.push(acc / total);
        }
        Ok(Self { xs, cum })
    }

    pub fn unweighted(samples: &[f64]) -> Result<Self> {
        Self::new(samples, &vec![1.0; samples.len()])
    }

    /// `F(x) = P(X ≤ x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.xs.partition_point(|&v| v <= x);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }

    pub fn support(&self) -> &[f64] {
        &self.xs
    }
}

/// Two-sample KS distance between weighted samples.
pub fn ks_two_sample_weighted(a: &WeightedEcdf, b: &WeightedEcdf, threshold: f64) -> KsResult {
    let d = a
        .support()
        .iter()
        .chain(b.support())
        .map(|&x| (a.eval(x) - b.eval(x)).abs())
        .fold(0.0, f64::max);
    KsResult::new(d, a.support().len().min(b.support().len()), threshold)
}

pub fn ks_two_sample(a: &[f64], b: &[f64], threshold: f64) -> Result<KsResult> {
    Ok(ks_two_sample_weighted(
        &WeightedEcdf::unweighted(a)?,
        &WeightedEcdf::unweighted(b)?,
        threshold,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderCheck {
    pub pass: bool,
    pub max_violation: f64,
    pub tolerance: f64,
}

/// Checks `F_high(x) ≤ F_low(x) + tolerance` on the merged quantile grid.
pub fn cdf_order_check(samples_low_eta: &[f64], samples_high_eta: &[f64], tolerance: f64) -> Result<OrderCheck> {
    let low = WeightedEcdf::unweighted(samples_low_eta)?;
    let high = WeightedEcdf::unweighted(samples_high_eta)?;
    let mut merged: Vec<f64> = samples_low_eta.iter().chain(samples_high_eta).copied().collect();
    merged.sort_by(f64::total_cmp);
    let m = merged.len();
    let mut max_violation: f64 = 0.0;
    for k in 1..=QUANTILE_GRID {
        let pos = (k as f64 / (QUANTILE_GRID + 1) as f64 * m as f64).floor() as usize;
        let x = merged[pos.min(m - 1)];
        max_violation = max_violation.max(high.eval(x) - low.eval(x));
    }
    Ok(OrderCheck {
        pass: max_violation <= tolerance,
        max_violation,
        tolerance,
    })
}

/// `(Σw)² / Σw²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let (s, s2) = weights.iter().fold((0.0, 0.0), |(s, s2), w| (s + w, s2 + w * w));
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `(1/n) Σ w_i v_i`: the weights are densities with mean one.
    Unnormalized,
    /// `Σ w_i v_i / Σ w_i` with delta-method standard error.
    SelfNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMeanVerdict {
    pub pass: bool,
    pub estimate: Estimate,
    pub ess: f64,
    pub target: f64,
}

/// Weighted mean estimate of `E[v]` under weights `exp(log_weights)`.
pub fn weighted_mean(values: &[f64], log_weights: &[f64], mode: Normalization) -> Result<(Estimate, f64)> {
    if values.is_empty() {
        return Err(WettingError::EmptySample);
    }
    if values.len() != log_weights.len() {
        return Err(invalid("log_weights", "length differs from values"));
    }
    let shift = match mode {
        Normalization::Unnormalized => 0.0,
        Normalization::SelfNormalized => log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    let w: Vec<f64> = log_weights.iter().map(|lw| (lw - shift).exp()).collect();
    let ess = effective_sample_size(&w);
    if !(ess >= MIN_ESS) {
        return Err(WettingError::LowEffectiveSampleSize { ess, required: MIN_ESS });
    }
    let est = match mode {
        Normalization::Unnormalized => {
            let prods: Vec<f64> = w.iter().zip(values).map(|(w, v)| w * v).collect();
            Estimate::from_samples(&prods)?
        }
        Normalization::SelfNormalized => {
            let sw: f64 = w.iter().sum();
            let mean = w.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() / sw;
            let var = w
                .iter()
                .zip(values)
                .map(|(w, v)| (w * (v - mean)).powi(2))
                .sum::<f64>();
            Estimate {
                mean,
                se: var.sqrt() / sw,
                n: values.len(),
            }
        }
    };
    Ok((est, ess))
}

/// Passes iff the weighted mean is within `k_se` standard errors of `target`.
pub fn weighted_mean_test(
    values: &[f64],
    log_weights: &[f64],
    target: f64,
    k_se: f64,
    mode: Normalization,
) -> Result<WeightedMeanVerdict> {
    let (estimate, ess) = weighted_mean(values, log_weights, mode)?;
    Ok(WeightedMeanVerdict {
        pass: estimate.compatible_with(target, k_se),
        estimate,
        ess,
        target,
    })
}

/// Integrated autocorrelation time with Sokal's self-consistent window.
pub fn integrated_autocorr_time(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c0 = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c = series[..n - lag]
            .iter()
            .zip(&series[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / n as f64;
        tau += 2.0 * c / c0;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Test direction `h` in the span of the sine basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub id: String,
    pub coeffs: SpectralVector,
}

impl Direction {
    pub fn sine_mode(n: usize) -> Result<Self> {
        Ok(Self {
            id: format!("e{n}"),
            coeffs: SpectralVector::unit(n, n)?,
        })
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.coeffs().iter().map(|c| c * c).sum()
    }

    fn pair(&self, path: &SpectralVector) -> f64 {
        self.coeffs
            .coeffs()
            .iter()
            .zip(path.coeffs())
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// One row of the increment table. `h_id = "H-1"` rows hold
/// `E‖Y_t − Y_s‖²_{−1}/(t − s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementRow {
    pub n: usize,
    pub s: f64,
    pub t: f64,
    pub h_id: String,
    pub ratio: f64,
    pub se: f64,
    pub replicas: usize,
    pub unreliable: bool,
}

impl IncrementRow {
    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.ratio,
            se: self.se,
            n: self.replicas,
        }
    }
}

pub const SOBOLEV_ROW: &str = "H-1";

/// Empirical `E[⟨Y_t − Y_s, h⟩²]/(‖h‖²(t − s))` and
/// `E‖Y_t − Y_s‖²_{−1}/(t − s)` over an ensemble of trajectories sharing `n`
/// and observation times.
pub fn increment_moment_report(
    trajectories: &[RescaledTrajectory],
    h_set: &[Direction],
    pairs: &[(f64, f64)],
    cutoff: usize,
) -> Result<Vec<IncrementRow>> {
    let first = trajectories.first().ok_or(WettingError::EmptySample)?;
    let n = first.n;
    if trajectories.iter().any(|t| t.n != n || t.times != first.times) {
        return Err(invalid("trajectories", "ensemble must share n and observation times"));
    }
    let index = |time: f64| -> Result<usize> {
        first
            .times
            .iter()
            .position(|&x| (x - time).abs() < 1e-12)
            .ok_or_else(|| invalid("pairs", format!("time {time} is not an observation time")))
    };
    let mut idx_pairs = Vec::with_capacity(pairs.len());
    for &(s, t) in pairs {
        if !(t > s) {
            return Err(invalid("pairs", format!("need s < t, got ({s}, {t})")));
        }
        idx_pairs.push((index(s)?, index(t)?, s, t));
    }
    let replicas = trajectories.len();
    let unreliable = replicas < MIN_REPLICAS;
    let spectra: Vec<Vec<SpectralVector>> = trajectories
        .iter()
        .map(|tr| {
            tr.snapshots
                .iter()
                .map(|p| sine_coefficients(p, cutoff))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &(i, j, s, t) in &idx_pairs {
        let gap = t - s;
        let diffs: Vec<SpectralVector> = spectra
            .iter()
            .map(|sp| {
                let d = sp[j].coeffs().iter().zip(sp[i].coeffs()).map(|(a, b)| a - b).collect();
                SpectralVector::new(d)
            })
            .collect::<Result<_>>()?;
        for h in h_set {
            let norm = h.norm_sq();
            let vals: Vec<f64> = diffs.iter().map(|d| h.pair(d).powi(2) / (norm * gap)).collect();
            let e = Estimate::from_samples(&vals)?;
            rows.push(IncrementRow {
                n,
                s,
                t,
                h_id: h.id.clone(),
                ratio: e.mean,
                se: e.se,
                replicas,
                unreliable,
            });
        }
        let vals: Vec<f64> = diffs
            .iter()
            .map(|d| Ok(d.negative_sobolev_norm(1.0)?.powi(2) / gap))
            .collect::<Result<_>>()?;
        let e = Estimate::from_samples(&vals)?;
        rows.push(IncrementRow {
            n,
            s,
            t,
            h_id: SOBOLEV_ROW.into(),
            ratio: e.mean,
            se: e.se,
            replicas,
            unreliable,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `log √(E‖Y_t − Y_s‖²_{−1})` against `log(t − s)`
/// over the `H-1` rows of one lattice size.
pub fn holder_slope(rows: &[IncrementRow], n: usize) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.n == n && r.h_id == SOBOLEV_ROW)
        .map(|r| {
            let gap = r.t - r.s;
            (gap.ln(), 0.5 * (r.ratio * gap).ln())
        })
        .collect();
    if pts.len() < 2 {
        return Err(invalid("rows", "need at least two gaps for a slope"));
    }
    Ok(ols_slope(&pts))
}

fn ols_slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Least-squares slope of independent estimates against `x`, with its
/// propagated standard error.
pub fn trend_slope(points: &[(f64, Estimate)]) -> Result<Estimate> {
    if points.len() < 2 {
        return Err(invalid("points", "need at least two points for a slope"));
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("points", "abscissae must not all coincide"));
    }
    let slope = points.iter().map(|p| (p.0 - mx) * p.1.mean).sum::<f64>() / sxx;
    let var = points.iter().map(|p| ((p.0 - mx) * p.1.se).powi(2)).sum::<f64>() / (sxx * sxx);
    Ok(Estimate {
        mean: slope,
        se: var.sqrt(),
        n: points.len(),
    })
}

/// Machine-readable verdict for one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub test_id: String,
    pub inputs_digest: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{NoiseSource, SeedSpec};
    use proptest::prelude::*;

    /// Median of |N(0,1)| by bisection on the error function.
    fn half_normal_median() -> f64 {
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if erf(mid / SQRT_2) < 0.5 {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn reflecting_cdf_examples() {
        assert_eq!(reflecting_bm_cdf(1.0, 0.0), 0.0);
        assert!((reflecting_bm_cdf(1.0, 50.0) - 1.0).abs() < 1e-15);
        let med = half_normal_median();
        assert!((med - 0.674490).abs() < 1e-6);
        assert!((reflecting_bm_cdf(1.0, med) - 0.5).abs() < 1e-12);
        assert_eq!(reflecting_bm_cdf(1.0, -1.0), 0.0);
    }

    #[test]
    fn bessel3_cdf_matches_quadrature_of_maxwell_density() {
        for &x in &[0.3, 1.0, 2.5] {
            let q = crate::quadrature::integrate(
                |u| (2.0 / PI).sqrt() * u * u * (-u * u / 2.0).exp(),
                0.0,
                x,
                1e-14,
            )
            .unwrap();
            assert!((bessel3_cdf(1.0, x) - q).abs() < 1e-13);
        }
    }

    #[test]
    fn ks_degenerate_cases() {
        let zeros = vec![0.0; 100];
        let r = ks_statistic(&zeros, |x| reflecting_bm_cdf(1.0, x), 0.1).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(!r.pass);
        let shifted: Vec<f64> = (0..100).map(|i| 10.0 + i as f64 * 1e-3).collect();
        let r = ks_statistic(&shifted, |x| reflecting_bm_cdf(1.0, x.max(0.0)), 0.1).unwrap();
        assert!(r.statistic > 0.999);
        assert!(matches!(ks_statistic(&[], |x| x, 0.1), Err(WettingError::EmptySample)));
    }

    #[test]
    fn ks_of_own_distribution_is_small() {
        let n = 100_000;
        let mut s = SeedSpec::new(5, 0, "ks").stream();
        let xs: Vec<f64> = (0..n).map(|_| s.normal().abs()).collect();
        let r = ks_statistic(&xs, |x| reflecting_bm_cdf(1.0, x), ks_noise_threshold(n)).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn order_check_cases() {
        let mut s = SeedSpec::new(9, 0, "order").stream();
        let a: Vec<f64> = (0..5000).map(|_| s.normal()).collect();
        let same = cdf_order_check(&a, &a, 0.01).unwrap();
        assert!(same.pass && same.max_violation == 0.0);
        let shifted: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        assert!(cdf_order_check(&a, &shifted, 0.01).unwrap().pass);
        let rev = cdf_order_check(&shifted, &a, 0.01).unwrap();
        assert!(!rev.pass);
        let gap = ks_two_sample(&a, &shifted, 1.0).unwrap().statistic;
        assert!((rev.max_violation - gap).abs() < 0.02, "{} vs {gap}", rev.max_violation);
    }

    #[test]
    fn weighted_mean_constant_values() {
        let v = vec![2.5; 200];
        let lw = vec![0.0; 200];
        let ok = weighted_mean_test(&v, &lw, 2.5, 3.0, Normalization::Unnormalized).unwrap();
        assert!(ok.pass && ok.estimate.se == 0.0 && ok.estimate.mean == 2.5);
        let bad = weighted_mean_test(&v, &lw, 2.4, 3.0, Normalization::SelfNormalized).unwrap();
        assert!(!bad.pass);
    }

    #[test]
    fn weighted_mean_refuses_low_ess() {
        let v = vec![1.0; 200];
        let mut lw = vec![-50.0; 200];
        lw[0] = 0.0;
        assert!(matches!(
            weighted_mean_test(&v, &lw, 1.0, 3.0, Normalization::SelfNormalized),
            Err(WettingError::LowEffectiveSampleSize { .. })
        ));
    }

    #[test]
    fn standard_error_scales_like_inverse_sqrt_n() {
        let mut s = SeedSpec::new(3, 0, "se").stream();
        let a: Vec<f64> = (0..40_000).map(|_| s.normal()).collect();
        let small = Estimate::from_samples(&a[..10_000]).unwrap();
        let large = Estimate::from_samples(&a).unwrap();
        let ratio = small.se / large.se;
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn autocorrelation_of_ar1() {
        let mut s = SeedSpec::new(4, 0, "ar1").stream();
        let rho: f64 = 0.8;
        let mut x = 0.0;
        let series: Vec<f64> = (0..200_000)
            .map(|_| {
                x = rho * x + (1.0 - rho * rho).sqrt() * s.normal();
                x
            })
            .collect();
        let tau = integrated_autocorr_time(&series);
        let exact = (1.0 + rho) / (1.0 - rho);
        assert!((tau - exact).abs() / exact < 0.1, "tau {tau}");
    }

    #[test]
    fn trend_slope_of_flat_points() {
        let pts: Vec<(f64, Estimate)> = [8.0f64, 16.0, 32.0]
            .iter()
            .map(|&n| (n.ln(), Estimate { mean: 2.0, se: 0.05, n: 1000 }))
            .collect();
        let s = trend_slope(&pts).unwrap();
        assert!(s.mean.abs() < 1e-12 && s.se > 0.0);
    }

    proptest! {
        #[test]
        fn ks_invariant_under_monotone_relabeling(xs in prop::collection::vec(0.0f64..4.0, 1..200)) {
            let base = ks_statistic(&xs, |x| reflecting_bm_cdf(1.0, x), 1.0).unwrap();
            let ys: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
            let relabeled = ks_statistic(&ys, |y| reflecting_bm_cdf(1.0, y.ln()), 1.0).unwrap();
            prop_assert!((base.statistic - relabeled.statistic).abs() < 1e-12);
        }

        #[test]
        fn weighted_mean_is_order_invariant(
            pairs in prop::collection::vec((-3.0f64..3.0, -1.0f64..1.0), 150..300),
            rot in 0usize..150,
        ) {
            let v: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let mut v2 = v.clone();
            let mut w2 = w.clone();
            v2.rotate_left(rot);
            w2.rotate_left(rot);
            v2.reverse();
            w2.reverse();
            for mode in [Normalization::Unnormalized, Normalization::SelfNormalized] {
                let a = weighted_mean(&v, &w, mode).unwrap().0;
                let b = weighted_mean(&v2, &w2, mode).unwrap().0;
                prop_assert!((a.mean - b.mean).abs() < 1e-12 && (a.se - b.se).abs() < 1e-12);
            }
        }
    }
}
