//! Static laws: Gibbs samplers for the δ-pinning and strip wetting measures,
//! the reference path laws on `C([0,1])`, and the integration-by-parts
//! verifier for the strip measure.
//!
//! Both lattice measures are Gaussian walks `φ_0 = 0, φ_1, …, φ_N ≥ 0` with
//! free right endpoint. Given its neighbours, site `i` sees the Gaussian
//! factor `g_i(x) = exp(−(x − m_i)²/(2σ_i²))` with
//! `(m_i, σ_i²) = ((φ_{i−1} + φ_{i+1})/2, 1/2)` in the bulk and
//! `(φ_{N−1}, 1)` at the endpoint.

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, WettingError};
use crate::field::LatticeField;
use crate::grid::TimeGrid;
use crate::quadrature::{integrate_with_breaks, GaussLegendre};
use crate::rng::{NoiseSource, RandomStream, SeedSpec};
use crate::stats::{effective_sample_size, integrated_autocorr_time, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialShape {
    /// `β·1_{[0,a]}`.
    Indicator,
    /// `β·ψ(x/a)` with `ψ(u) = (1 − u²)²` on `[0,1]`.
    SmoothBump,
}

/// Strip reward `φ_a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripPotential {
    pub a: f64,
    pub beta: f64,
    pub shape: PotentialShape,
}

impl StripPotential {
    pub fn new(a: f64, beta: f64, shape: PotentialShape) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(invalid("a", format!("strip width must be positive, got {a}")));
        }
        if !beta.is_finite() {
            return Err(invalid("beta", "must be finite"));
        }
        Ok(Self { a, beta, shape })
    }

    pub fn smooth_bump(a: f64, beta: f64) -> Result<Self> {
        Self::new(a, beta, PotentialShape::SmoothBump)
    }

    /// Strip of width `a` whose height satisfies `a·e^β = constant`.
    pub fn from_normalization(a: f64, constant: f64, shape: PotentialShape) -> Result<Self> {
        if !(constant > 0.0) {
            return Err(invalid("constant", "a·e^β must be positive"));
        }
        Self::new(a, (constant / a).ln(), shape)
    }

    pub fn value(&self, x: f64) -> f64 {
        if !(0.0..=self.a).contains(&x) {
            return 0.0;
        }
        match self.shape {
            PotentialShape::Indicator => self.beta,
            PotentialShape::SmoothBump => {
                let u = x / self.a;
                let s = 1.0 - u * u;
                self.beta * s * s
            }
        }
    }

    /// `φ_a′(x)`; only the smooth bump has one.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        self.require_smooth()?;
        Ok(self.bump_derivative(x))
    }

    #[inline]
    pub(crate) fn bump_derivative(&self, x: f64) -> f64 {
        if !(0.0..=self.a).contains(&x) {
            return 0.0;
        }
        let u = x / self.a;
        -4.0 * self.beta * u * (1.0 - u * u) / self.a
    }

    /// `sup φ_a ∨ 0`, the log of the rejection envelope.
    pub fn envelope(&self) -> f64 {
        self.beta.max(0.0)
    }

    pub fn require_smooth(&self) -> Result<()> {
        match self.shape {
            PotentialShape::SmoothBump => Ok(()),
            PotentialShape::Indicator => Err(WettingError::Unsupported(
                "the indicator strip has no continuous density or derivative; \
                 use the δ-pinning sampler for point rewards"
                    .into(),
            )),
        }
    }

    pub fn id(&self) -> String {
        let shape = match self.shape {
            PotentialShape::Indicator => "indicator",
            PotentialShape::SmoothBump => "smooth-bump",
        };
        format!("{shape}(a={},beta={})", self.a, self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinningParams {
    pub beta: f64,
    pub n: usize,
}

impl PinningParams {
    pub fn new(beta: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "need at least one site"));
        }
        if beta.is_nan() || beta == f64::INFINITY {
            return Err(invalid("beta", "must be finite or −∞"));
        }
        Ok(Self { beta, n })
    }
}

/// Gaussian factor of one site given its neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteConditional {
    pub mean: f64,
    pub var: f64,
}

impl SiteConditional {
    /// `g(x) = exp(−(x − m)²/(2σ²))`.
    #[inline]
    pub fn factor(&self, x: f64) -> f64 {
        (-(x - self.mean).powi(2) / (2.0 * self.var)).exp()
    }

    #[inline]
    pub fn factor_derivative(&self, x: f64) -> f64 {
        -(x - self.mean) / self.var * self.factor(x)
    }

    /// `∫₀^∞ g = σ√(π/2)·erfc(−m/(σ√2))`.
    pub fn half_line_mass(&self) -> f64 {
        let s = self.var.sqrt();
        s * FRAC_PI_2.sqrt() * libm::erfc(-self.mean / (s * SQRT_2))
    }

    /// Density on `[0,∞)` of the Gaussian proposal conditioned to be nonnegative.
    pub fn proposal_density(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            self.factor(x) / self.half_line_mass()
        }
    }

    /// Draws from `N(m, σ²)` conditioned on `[0,∞)`; needs `m ≥ 0`.
    #[inline]
    pub fn sample_nonnegative<R: NoiseSource>(&self, rng: &mut R) -> f64 {
        let s = self.var.sqrt();
        loop {
            let y = self.mean + s * rng.normal();
            if y >= 0.0 {
                return y;
            }
        }
    }
}

/// Conditional of site `i` (0-based) of `values`.
#[inline]
pub fn site_conditional(values: &[f64], i: usize) -> SiteConditional {
    let n = values.len();
    let left = if i == 0 { 0.0 } else { values[i - 1] };
    if i + 1 == n {
        SiteConditional { mean: left, var: 1.0 }
    } else {
        SiteConditional {
            mean: 0.5 * (left + values[i + 1]),
            var: 0.5,
        }
    }
}

/// Acceptance probability of the strip rejection step.
#[inline]
pub fn strip_acceptance(pot: &StripPotential, y: f64) -> f64 {
    (pot.value(y) - pot.envelope()).exp()
}

/// Probability of the atom at 0 in the δ-pinning conditional.
pub fn pinning_atom_probability(beta: f64, cond: &SiteConditional) -> f64 {
    if beta == f64::NEG_INFINITY {
        return 0.0;
    }
    let log_atom = beta - cond.mean * cond.mean / (2.0 * cond.var);
    let log_cont = cond.half_line_mass().ln();
    1.0 / (1.0 + (log_cont - log_atom).exp())
}

fn draw_strip_site<R: NoiseSource>(pot: &StripPotential, cond: &SiteConditional, rng: &mut R) -> f64 {
    loop {
        let y = cond.sample_nonnegative(rng);
        if rng.uniform() < strip_acceptance(pot, y) {
            return y;
        }
    }
}

fn draw_pinning_site<R: NoiseSource>(beta: f64, cond: &SiteConditional, rng: &mut R) -> f64 {
    if rng.uniform() < pinning_atom_probability(beta, cond) {
        0.0
    } else {
        cond.sample_nonnegative(rng)
    }
}

/// One systematic-scan sweep for the strip measure, in place.
pub fn sweep_strip<R: NoiseSource>(values: &mut [f64], pot: &StripPotential, rng: &mut R) {
    for i in 0..values.len() {
        let cond = site_conditional(values, i);
        values[i] = draw_strip_site(pot, &cond, rng);
    }
}

/// One systematic-scan sweep for the δ-pinning measure, in place.
pub fn sweep_pinning<R: NoiseSource>(values: &mut [f64], beta: f64, rng: &mut R) {
    for i in 0..values.len() {
        let cond = site_conditional(values, i);
        values[i] = draw_pinning_site(beta, &cond, rng);
    }
}

pub fn gibbs_sweep_strip(field: &LatticeField, pot: &StripPotential, seed: &SeedSpec) -> Result<LatticeField> {
    pot.require_smooth()?;
    field.check_nonnegative()?;
    let mut values = field.values().to_vec();
    sweep_strip(&mut values, pot, &mut seed.stream());
    LatticeField::new(values)
}

pub fn gibbs_sweep_delta_pinning(
    field: &LatticeField,
    params: &PinningParams,
    seed: &SeedSpec,
) -> Result<LatticeField> {
    field.check_nonnegative()?;
    if field.n() != params.n {
        return Err(invalid("n", format!("field has {} sites, params {}", field.n(), params.n)));
    }
    let mut values = field.values().to_vec();
    sweep_pinning(&mut values, params.beta, &mut seed.stream());
    LatticeField::new(values)
}

/// Target of a Gibbs chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StaticTarget {
    Strip(StripPotential),
    Pinning { beta: f64 },
}

impl StaticTarget {
    pub fn validate(&self) -> Result<()> {
        match self {
            StaticTarget::Strip(p) => p.require_smooth(),
            StaticTarget::Pinning { beta } => PinningParams::new(*beta, 1).map(|_| ()),
        }
    }

    pub fn sweep<R: NoiseSource>(&self, values: &mut [f64], rng: &mut R) {
        match self {
            StaticTarget::Strip(p) => sweep_strip(values, p, rng),
            StaticTarget::Pinning { beta } => sweep_pinning(values, *beta, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub burn_in: usize,
    pub thin: usize,
}

impl ChainSettings {
    /// Burn-in `10·N` sweeps, keep every `N`-th sweep.
    pub fn defaults(n: usize) -> Self {
        Self {
            burn_in: 10 * n,
            thin: n.max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub sweeps: usize,
    pub samples: usize,
    /// Integrated autocorrelation time of `Σ_i φ_i`, in kept samples.
    pub autocorr_time: f64,
}

/// Gibbs chain with burn-in and thinning.
#[derive(Debug, Clone)]
pub struct GibbsChain {
    target: StaticTarget,
    settings: ChainSettings,
    values: Vec<f64>,
}

impl GibbsChain {
    pub fn new(target: StaticTarget, init: LatticeField, settings: ChainSettings) -> Result<Self> {
        target.validate()?;
        init.check_nonnegative()?;
        if settings.thin == 0 {
            return Err(invalid("thin", "must be at least 1"));
        }
        Ok(Self {
            target,
            settings,
            values: init.into_values(),
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.values
    }

    /// Runs burn-in, then hands `samples` thinned states to `visit`.
    pub fn run<R: NoiseSource>(
        &mut self,
        samples: usize,
        rng: &mut R,
        mut visit: impl FnMut(&[f64]),
    ) -> ChainDiagnostics {
        for _ in 0..self.settings.burn_in {
            self.target.sweep(&mut self.values, rng);
        }
        let mut series = Vec::with_capacity(samples);
        for _ in 0..samples {
            for _ in 0..self.settings.thin {
                self.target.sweep(&mut self.values, rng);
            }
            series.push(self.values.iter().sum());
            visit(&self.values);
        }
        ChainDiagnostics {
            sweeps: self.settings.burn_in + samples * self.settings.thin,
            samples,
            autocorr_time: integrated_autocorr_time(&series),
        }
    }
}

/// Approximate equilibrium draw: absolute Gaussian walk followed by
/// `max(10N, N²)` sweeps.
pub fn equilibrium_sample<R: NoiseSource>(n: usize, target: &StaticTarget, rng: &mut R) -> Result<LatticeField> {
    target.validate()?;
    let mut values = Vec::with_capacity(n);
    let mut w = 0.0;
    for _ in 0..n {
        w += rng.normal();
        values.push(f64::abs(w));
    }
    for _ in 0..(10 * n).max(n * n) {
        target.sweep(&mut values, rng);
    }
    LatticeField::new(values)
}

/// `L¹` distance between the exact `N = 1` strip density and its image under
/// the sampler's transition kernel, both by quadrature.
pub fn strip_kernel_invariance_l1(pot: &StripPotential) -> Result<f64> {
    pot.require_smooth()?;
    let tol = 1e-14;
    let brk = [0.0, pot.a, 8.0, 40.0];
    let unnorm = |x: f64| (-x * x / 2.0 + pot.value(x)).exp();
    let z = integrate_with_breaks(unnorm, &brk, tol)?;
    let exact = |y: f64| unnorm(y) / z;
    // with one site the conditional ignores the current state
    let cond = site_conditional(&[0.0], 0);
    let accept_rate = integrate_with_breaks(|y| cond.proposal_density(y) * strip_acceptance(pot, y), &brk, tol)?;
    let kernel_out = |y: f64| cond.proposal_density(y) * strip_acceptance(pot, y) / accept_rate;
    let mass = integrate_with_breaks(exact, &brk, tol)?;
    let l1 = integrate_with_breaks(|y| (mass * kernel_out(y) - exact(y)).abs(), &brk, tol)?;
    Ok(l1)
}

/// `L¹` distance (atom plus continuous part) between the exact `N = 1`
/// δ-pinning law and its image under the sampler's kernel.
pub fn pinning_kernel_invariance_l1(beta: f64) -> Result<f64> {
    let tol = 1e-14;
    let brk = [0.0, 8.0, 40.0];
    let gauss = |x: f64| (-x * x / 2.0).exp();
    let cont_mass = integrate_with_breaks(gauss, &brk, tol)?;
    let z = beta.exp() + cont_mass;
    let exact_atom = beta.exp() / z;
    let exact_cont = |x: f64| gauss(x) / z;
    let cond = site_conditional(&[0.0], 0);
    let p = pinning_atom_probability(beta, &cond);
    let total_in = exact_atom + integrate_with_breaks(exact_cont, &brk, tol)?;
    let kernel_cont = |y: f64| total_in * (1.0 - p) * cond.proposal_density(y);
    let cont_l1 = integrate_with_breaks(|y| (kernel_cont(y) - exact_cont(y)).abs(), &brk, tol)?;
    Ok((total_in * p - exact_atom).abs() + cont_l1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    ReflectingBm,
    Bessel3,
    /// Bessel-3 path from 0 with the Imhof log-weight `log(√(π/2)/X_1)`.
    Meander,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePathLaw {
    pub kind: ReferenceKind,
    pub start: f64,
    pub grid: TimeGrid,
}

impl ReferencePathLaw {
    pub fn new(kind: ReferenceKind, start: f64, grid: TimeGrid) -> Result<Self> {
        if !(start >= 0.0) {
            return Err(invalid("start", "must be nonnegative"));
        }
        if kind == ReferenceKind::Meander && start > 0.0 {
            return Err(WettingError::Unsupported(
                "the meander is only available from 0 (Imhof weighting)".into(),
            ));
        }
        if grid.t0() != 0.0 || grid.t1() != 1.0 {
            return Err(invalid("grid", "reference paths live on [0, 1]"));
        }
        Ok(Self { kind, start, grid })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    pub values: Vec<f64>,
    /// Importance log-weight, present for the meander.
    pub log_weight: Option<f64>,
}

impl ReferencePath {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("nonempty path")
    }
}

pub fn sample_reference_path<R: NoiseSource>(law: &ReferencePathLaw, rng: &mut R) -> ReferencePath {
    let steps = law.grid.steps();
    let sd = law.grid.dt().sqrt();
    let mut values = Vec::with_capacity(steps + 1);
    match law.kind {
        ReferenceKind::ReflectingBm => {
            let mut b = law.start;
            values.push(b);
            for _ in 0..steps {
                b += sd * rng.normal();
                values.push(b.abs());
            }
            ReferencePath { values, log_weight: None }
        }
        ReferenceKind::Bessel3 | ReferenceKind::Meander => {
            let mut b = [law.start, 0.0, 0.0];
            values.push(law.start);
            for _ in 0..steps {
                for c in &mut b {
                    *c += sd * rng.normal();
                }
                values.push((b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt());
            }
            let log_weight = (law.kind == ReferenceKind::Meander)
                .then(|| 0.5 * FRAC_PI_2.ln() - values[steps].ln());
            ReferencePath { values, log_weight }
        }
    }
}

/// Brownian meander of length 1 sampled directly as the norm of two
/// Brownian motions and one Brownian bridge.
pub fn sample_meander_direct<R: NoiseSource>(grid: &TimeGrid, rng: &mut R) -> Vec<f64> {
    let steps = grid.steps();
    let sd = grid.dt().sqrt();
    let mut w = vec![[0.0f64; 3]; steps + 1];
    for k in 1..=steps {
        let prev = w[k - 1];
        for (c, p) in w[k].iter_mut().zip(prev) {
            *c = p + sd * rng.normal();
        }
    }
    let end = w[steps][2];
    (0..=steps)
        .map(|k| {
            let t = grid.time(k) - grid.t0();
            let bridge = w[k][2] - t / (grid.t1() - grid.t0()) * end;
            (w[k][0] * w[k][0] + w[k][1] * w[k][1] + bridge * bridge).sqrt()
        })
        .collect()
}

/// Smooth bounded functional on `ℝ₊ᴺ` with its gradient.
pub trait TestFunctional: Send + Sync {
    fn id(&self) -> String;
    fn value(&self, phi: &[f64]) -> f64;
    fn gradient(&self, phi: &[f64], out: &mut [f64]);
}

/// `exp(−Σ c_i φ_i)`, with `c_i = 1` when no rates are given.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpDecay {
    pub rates: Vec<f64>,
}

impl ExpDecay {
    fn rate(&self, i: usize) -> f64 {
        self.rates.get(i).copied().unwrap_or(1.0)
    }
}

impl TestFunctional for ExpDecay {
    fn id(&self) -> String {
        format!("exp-decay{:?}", self.rates)
    }

    fn value(&self, phi: &[f64]) -> f64 {
        (-phi.iter().enumerate().map(|(i, x)| self.rate(i) * x).sum::<f64>()).exp()
    }

    fn gradient(&self, phi: &[f64], out: &mut [f64]) {
        let v = self.value(phi);
        for (i, o) in out.iter_mut().enumerate() {
            *o = -self.rate(i) * v;
        }
    }
}

/// `exp(−Σ (φ_i − center)²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussBump {
    pub center: f64,
}

impl TestFunctional for GaussBump {
    fn id(&self) -> String {
        format!("gauss-bump({})", self.center)
    }

    fn value(&self, phi: &[f64]) -> f64 {
        (-phi.iter().map(|x| (x - self.center).powi(2)).sum::<f64>()).exp()
    }

    fn gradient(&self, phi: &[f64], out: &mut [f64]) {
        let v = self.value(phi);
        for (o, x) in out.iter_mut().zip(phi) {
            *o = -2.0 * (x - self.center) * v;
        }
    }
}

/// `atan(Σ_i φ_i / i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArctanMix;

impl TestFunctional for ArctanMix {
    fn id(&self) -> String {
        "arctan-mix".into()
    }

    fn value(&self, phi: &[f64]) -> f64 {
        phi.iter().enumerate().map(|(i, x)| x / (i + 1) as f64).sum::<f64>().atan()
    }

    fn gradient(&self, phi: &[f64], out: &mut [f64]) {
        let s: f64 = phi.iter().enumerate().map(|(i, x)| x / (i + 1) as f64).sum();
        let d = 1.0 / (1.0 + s * s);
        for (i, o) in out.iter_mut().enumerate() {
            *o = d / (i + 1) as f64;
        }
    }
}

/// The fixed battery of test functionals.
pub fn functional_pool() -> Vec<Box<dyn TestFunctional>> {
    vec![
        Box::new(ExpDecay { rates: vec![] }),
        Box::new(GaussBump { center: 0.3 }),
        Box::new(ArctanMix),
    ]
}

/// `Σ_i φ_i (h_{i+1} + h_{i−1} − 2h_i)` with `h_0 = 0` and `h_{N+1} = h_N`.
pub fn laplacian_pairing(phi: &[f64], h: &[f64]) -> f64 {
    let n = h.len();
    (0..n)
        .map(|i| {
            let left = if i == 0 { 0.0 } else { h[i - 1] };
            let right = if i + 1 == n { h[i] } else { h[i + 1] };
            phi[i] * (right + left - 2.0 * h[i])
        })
        .sum()
}

/// `exp(−Σ (φ_i − φ_{i−1})²/2 + Σ φ_a(φ_i))`.
fn strip_weight(phi: &[f64], pot: &StripPotential) -> f64 {
    let mut prev = 0.0;
    let mut e = 0.0;
    for &x in phi {
        e += -(x - prev).powi(2) / 2.0 + pot.value(x);
        prev = x;
    }
    e.exp()
}

/// Both sides of the integration-by-parts identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbpfReport {
    pub n: usize,
    pub potential: String,
    pub f_id: String,
    pub h: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub se: f64,
}

const QUAD_TOL: f64 = 1e-13;

fn half_line_breaks(center: f64, a: f64) -> Vec<f64> {
    let c = center.max(0.0);
    let mut b = vec![0.0, a, c, c + 4.0, c + 10.0, c + 40.0];
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

/// `∫ over ℝ₊ⁿ` of `g(φ)·strip_weight(φ)` for `n ∈ {1, 2}`.
fn integrate_against_measure(n: usize, pot: &StripPotential, g: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
    match n {
        1 => integrate_with_breaks(|x| g(&[x]) * strip_weight(&[x], pot), &half_line_breaks(0.0, pot.a), QUAD_TOL),
        2 => {
            let mut err = None;
            let v = integrate_with_breaks(
                |x| {
                    match integrate_with_breaks(
                        |y| g(&[x, y]) * strip_weight(&[x, y], pot),
                        &half_line_breaks(x, pot.a),
                        QUAD_TOL,
                    ) {
                        Ok(v) => v,
                        Err(e) => {
                            err.get_or_insert(e);
                            0.0
                        }
                    }
                },
                &half_line_breaks(0.0, pot.a),
                1e-11,
            )?;
            match err {
                Some(e) => Err(e),
                None => Ok(v),
            }
        }
        _ => Err(WettingError::Unsupported(format!(
            "deterministic quadrature covers n ∈ {{1, 2}}, got {n}; use the Monte Carlo variant"
        ))),
    }
}

/// Unnormalized slice `Z·σ_i(f|b)` and its `b`-derivative.
fn slice_unnormalized(
    n: usize,
    site: usize,
    b: f64,
    pot: &StripPotential,
    f: &dyn TestFunctional,
) -> Result<(f64, f64)> {
    let mut grad = vec![0.0; n];
    let mut body = |phi: &[f64]| -> (f64, f64) {
        let mut e = 0.0;
        let mut prev = 0.0;
        for (k, &x) in phi.iter().enumerate() {
            e += -(x - prev).powi(2) / 2.0;
            if k != site {
                e += pot.value(x);
            }
            prev = x;
        }
        let w = e.exp();
        let grad_h = crate::lattice_dynamics::gaussian_gradient(phi, site);
        f.gradient(phi, &mut grad);
        let fv = f.value(phi);
        (fv * w, (grad[site] - fv * grad_h) * w)
    };
    match n {
        1 => Ok(body(&[b])),
        2 => {
            let other = 1 - site;
            let center = b;
            let brk = half_line_breaks(center, pot.a);
            let mut phi = [0.0; 2];
            phi[site] = b;
            let v = integrate_with_breaks(
                |y| {
                    let mut p = phi;
                    p[other] = y;
                    body(&p).0
                },
                &brk,
                QUAD_TOL,
            )?;
            let d = integrate_with_breaks(
                |y| {
                    let mut p = phi;
                    p[other] = y;
                    body(&p).1
                },
                &brk,
                QUAD_TOL,
            )?;
            Ok((v, d))
        }
        _ => unreachable!("guarded by the caller"),
    }
}

/// Deterministic residual `|LHS − RHS|/(1 + |LHS|)` of the integration by
/// parts identity for the strip measure at `n ∈ {1, 2}`, with the
/// free-endpoint convention `h_{N+1} = h_N`.
pub fn ibpf_residual(n: usize, pot: &StripPotential, f: &dyn TestFunctional, h: &[f64]) -> Result<IbpfReport> {
    pot.require_smooth()?;
    if !(1..=2).contains(&n) {
        return Err(WettingError::Unsupported(format!(
            "deterministic quadrature covers n ∈ {{1, 2}}, got {n}; use the Monte Carlo variant"
        )));
    }
    if h.len() != n {
        return Err(invalid("h", format!("direction has {} entries for {n} sites", h.len())));
    }
    let z = integrate_against_measure(n, pot, &|_| 1.0)?;
    let lhs = integrate_against_measure(n, pot, &|phi| {
        let mut g = vec![0.0; phi.len()];
        f.gradient(phi, &mut g);
        g.iter().zip(h).map(|(a, b)| a * b).sum()
    })? / z;
    let bulk = integrate_against_measure(n, pot, &|phi| f.value(phi) * laplacian_pairing(phi, h))? / z;
    let mut boundary = 0.0;
    for (site, &hi) in h.iter().enumerate() {
        if hi == 0.0 {
            continue;
        }
        let mut err = None;
        let strip = integrate_with_breaks(
            |b| match slice_unnormalized(n, site, b, pot, f) {
                Ok((_, d)) => pot.value(b).exp() * d,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            &[0.0, pot.a],
            1e-12,
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        let at_a = slice_unnormalized(n, site, pot.a, pot, f)?.0;
        boundary += hi * (strip - at_a) / z;
    }
    let rhs = boundary - bulk;
    Ok(IbpfReport {
        n,
        potential: pot.id(),
        f_id: f.id(),
        h: h.to_vec(),
        lhs,
        rhs,
        residual: (lhs - rhs).abs() / (1.0 + lhs.abs()),
        se: 0.0,
    })
}

/// `σ_i(f|b)` estimated at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSliceEstimate {
    pub site: usize,
    pub level: f64,
    pub value: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbpfMcReport {
    pub report: IbpfReport,
    pub residual: Estimate,
    pub slices: Vec<ConditionalSliceEstimate>,
    /// Smallest effective sample size over the slice weights.
    pub min_slice_ess: f64,
    pub unreliable: bool,
    pub chains: usize,
    pub autocorr_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub samples: usize,
    pub chains: usize,
    pub chain: ChainSettings,
    pub b_nodes: usize,
}

impl McSettings {
    pub fn new(n: usize, samples: usize) -> Self {
        Self {
            samples,
            chains: 200,
            chain: ChainSettings::defaults(n),
            b_nodes: 24,
        }
    }
}

struct SlicePieces {
    g: SiteConditional,
    mass: f64,
}

impl SlicePieces {
    fn new(phi: &[f64], site: usize, pot: &StripPotential, gl: &GaussLegendre) -> Self {
        let g = site_conditional(phi, site);
        let excess = gl.integrate(0.0, pot.a, |x| g.factor(x) * pot.value(x).exp_m1());
        Self {
            g,
            mass: g.half_line_mass() + excess,
        }
    }
}

struct ChainSums {
    lhs: f64,
    rhs: f64,
    q: f64,
    slices: Vec<f64>,
    weight_sums: Vec<(f64, f64)>,
    autocorr: f64,
}

/// Monte Carlo residual of the integration by parts identity for any `n`.
///
/// The slices `σ_i(f|b)` are Rao–Blackwellized: given the other sites,
/// `f(φ^{i←b})·g_i(b)/C_i` is an unbiased per-sample estimate, where
/// `C_i = ∫₀^∞ g_i e^{φ_a}`. The standard error comes from independent
/// chains.
pub fn ibpf_residual_mc(
    n: usize,
    pot: &StripPotential,
    f: &dyn TestFunctional,
    h: &[f64],
    settings: &McSettings,
    seed: &SeedSpec,
) -> Result<IbpfMcReport> {
    pot.require_smooth()?;
    if n == 0 || h.len() != n {
        return Err(invalid("h", format!("direction has {} entries for {n} sites", h.len())));
    }
    if settings.chains == 0 || settings.samples < settings.chains {
        return Err(invalid("samples", "need at least one sample per chain"));
    }
    let per_chain = settings.samples / settings.chains;
    let gl = GaussLegendre::new(settings.b_nodes);
    let nodes: Vec<(f64, f64)> = gl.mapped(0.0, pot.a).collect();
    let active: Vec<usize> = (0..n).filter(|&i| h[i] != 0.0).collect();
    let levels: Vec<f64> = nodes.iter().map(|p| p.0).chain([0.0, pot.a]).collect();
    let target = StaticTarget::Strip(*pot);

    let run_chain = |c: usize| -> Result<ChainSums> {
        let mut rng = seed.replica(c as u64).stream();
        let init = equilibrium_sample(n, &target, &mut rng)?;
        let mut chain = GibbsChain::new(target, init, settings.chain)?;
        let mut sums = ChainSums {
            lhs: 0.0,
            rhs: 0.0,
            q: 0.0,
            slices: vec![0.0; active.len() * levels.len()],
            weight_sums: vec![(0.0, 0.0); active.len() * levels.len()],
            autocorr: 0.0,
        };
        let mut grad = vec![0.0; n];
        let mut moved = vec![0.0; n];
        let diag = chain.run(per_chain, &mut rng, |phi| {
            f.gradient(phi, &mut grad);
            let dh: f64 = grad.iter().zip(h).map(|(a, b)| a * b).sum();
            let fv = f.value(phi);
            let mut rhs = -fv * laplacian_pairing(phi, h);
            for (k, &i) in active.iter().enumerate() {
                let pieces = SlicePieces::new(phi, i, pot, &gl);
                moved.copy_from_slice(phi);
                let mut slice_at = |b: f64, want_derivative: bool| -> (f64, f64) {
                    moved[i] = b;
                    let fb = f.value(&moved);
                    let gb = pieces.g.factor(b);
                    let d = if want_derivative {
                        f.gradient(&moved, &mut grad);
                        (grad[i] * gb + fb * pieces.g.factor_derivative(b)) / pieces.mass
                    } else {
                        0.0
                    };
                    (fb * gb / pieces.mass, d)
                };
                let mut strip = 0.0;
                for (j, &(b, w)) in nodes.iter().enumerate() {
                    let (s, d) = slice_at(b, true);
                    strip += w * pot.value(b).exp() * d;
                    sums.slices[k * levels.len() + j] += s;
                }
                let (s0, _) = slice_at(0.0, false);
                let (sa, _) = slice_at(pot.a, false);
                let base = k * levels.len() + nodes.len();
                sums.slices[base] += s0;
                sums.slices[base + 1] += sa;
                for (j, &b) in levels.iter().enumerate() {
                    let w = pieces.g.factor(b) / pieces.mass;
                    let ws = &mut sums.weight_sums[k * levels.len() + j];
                    ws.0 += w;
                    ws.1 += w * w;
                }
                rhs += h[i] * (strip - sa);
            }
            sums.lhs += dh;
            sums.rhs += rhs;
            sums.q += dh - rhs;
        });
        sums.autocorr = diag.autocorr_time;
        Ok(sums)
    };

    let per: Vec<ChainSums> = (0..settings.chains)
        .into_par_iter()
        .map(run_chain)
        .collect::<Result<_>>()?;
    let m = per_chain as f64;
    let mean_of = |g: &dyn Fn(&ChainSums) -> f64| -> Result<Estimate> {
        let v: Vec<f64> = per.iter().map(|s| g(s) / m).collect();
        let mut e = Estimate::from_samples(&v)?;
        e.n = per.len() * per_chain;
        Ok(e)
    };
    let lhs = mean_of(&|s| s.lhs)?;
    let rhs = mean_of(&|s| s.rhs)?;
    let residual = mean_of(&|s| s.q)?;
    let mut slices = Vec::new();
    let mut min_ess = f64::INFINITY;
    for (k, &i) in active.iter().enumerate() {
        for (j, &b) in levels.iter().enumerate() {
            let idx = k * levels.len() + j;
            slices.push(ConditionalSliceEstimate {
                site: i + 1,
                level: b,
                value: mean_of(&|s| s.slices[idx])?,
            });
            let (s1, s2) = per
                .iter()
                .fold((0.0, 0.0), |acc, s| (acc.0 + s.weight_sums[idx].0, acc.1 + s.weight_sums[idx].1));
            let ess = if s2 > 0.0 { s1 * s1 / s2 } else { 0.0 };
            min_ess = min_ess.min(ess);
        }
    }
    if active.is_empty() {
        min_ess = effective_sample_size(&vec![1.0; per.len() * per_chain]);
    }
    let unreliable = min_ess < crate::stats::MIN_ESS;
    if unreliable {
        log::warn!("conditional slice effective sample size {min_ess:.1} below {}", crate::stats::MIN_ESS);
    }
    let autocorr = per.iter().map(|s| s.autocorr).fold(0.0, f64::max);
    Ok(IbpfMcReport {
        report: IbpfReport {
            n,
            potential: pot.id(),
            f_id: f.id(),
            h: h.to_vec(),
            lhs: lhs.mean,
            rhs: rhs.mean,
            residual: residual.mean,
            se: residual.se,
        },
        residual,
        slices,
        min_slice_ess: min_ess,
        unreliable,
        chains: per.len(),
        autocorr_time: autocorr,
    })
}

/// CSV with columns `site_1..site_N` and an optional `weight` column.
pub fn samples_to_csv(rows: &[Vec<f64>], weights: Option<&[f64]>) -> String {
    use std::fmt::Write as _;
    let n = rows.first().map_or(0, Vec::len);
    let mut out: String = (1..=n).map(|i| format!("site_{i}")).collect::<Vec<_>>().join(",");
    if weights.is_some() {
        out.push_str(",weight");
    }
    out.push('\n');
    for (k, r) in rows.iter().enumerate() {
        let cols: Vec<String> = r.iter().map(|&v| crate::io::fmt_real(v)).collect();
        out.push_str(&cols.join(","));
        if let Some(w) = weights {
            let _ = write!(out, ",{}", crate::io::fmt_real(w[k]));
        }
        out.push('\n');
    }
    out
}

/// Independent equilibrium chains, one per replica, collecting thinned
/// samples in replica order.
pub fn sample_static(
    n: usize,
    target: &StaticTarget,
    samples: usize,
    chains: usize,
    settings: ChainSettings,
    seed: &SeedSpec,
) -> Result<(Vec<Vec<f64>>, f64)> {
    if chains == 0 {
        return Err(invalid("chains", "must be positive"));
    }
    let per_chain = samples.div_ceil(chains);
    let out: Vec<(Vec<Vec<f64>>, f64)> = (0..chains)
        .into_par_iter()
        .map(|c| -> Result<_> {
            let mut rng: RandomStream = seed.replica(c as u64).stream();
            let init = equilibrium_sample(n, target, &mut rng)?;
            let mut chain = GibbsChain::new(*target, init, settings)?;
            let mut rows = Vec::with_capacity(per_chain);
            let diag = chain.run(per_chain, &mut rng, |phi| rows.push(phi.to_vec()));
            Ok((rows, diag.autocorr_time))
        })
        .collect::<Result<_>>()?;
    let tau = out.iter().map(|o| o.1).fold(0.0, f64::max);
    let mut rows: Vec<Vec<f64>> = out.into_iter().flat_map(|o| o.0).collect();
    rows.truncate(samples);
    Ok((rows, tau))
}

/// `E[1/X_1]` under the Bessel-3 law from 0.
pub const BESSEL3_INVERSE_MEAN: f64 = 0.797_884_560_802_865_4;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use crate::rng::ZeroNoise;
    use crate::stats::{ks_statistic, reflecting_bm_cdf};

    fn bump(a: f64, beta: f64) -> StripPotential {
        StripPotential::smooth_bump(a, beta).unwrap()
    }

    #[test]
    fn potential_shape() {
        let p = bump(0.5, 1.0);
        assert_eq!(p.value(0.0), 1.0);
        assert_eq!(p.value(0.5), 0.0);
        assert_eq!(p.value(0.7), 0.0);
        for &x in &[0.1, 0.25, 0.4] {
            let fd = (p.value(x + 1e-6) - p.value(x - 1e-6)) / 2e-6;
            assert!((p.derivative(x).unwrap() - fd).abs() < 1e-8);
        }
        let ind = StripPotential::new(0.5, 1.0, PotentialShape::Indicator).unwrap();
        assert!(matches!(ind.derivative(0.1), Err(WettingError::Unsupported(_))));
        let norm = StripPotential::from_normalization(0.2, 1.0, PotentialShape::SmoothBump).unwrap();
        assert!((norm.a * norm.beta.exp() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn interior_atom_probability_example() {
        // ∫₀^∞ e^{−x²} dx by quadrature, independent of the erfc expression
        let mass = integrate(|x| (-x * x).exp(), 0.0, 40.0, 1e-15).unwrap();
        let expected = 1.0 / (1.0 + mass);
        let p = pinning_atom_probability(0.0, &site_conditional(&[0.0, 0.0, 0.0], 1));
        assert!((p - expected).abs() < 1e-13);
        assert!((p - 0.530159).abs() < 1e-6);
        assert_eq!(pinning_atom_probability(f64::NEG_INFINITY, &site_conditional(&[0.0, 0.0, 0.0], 1)), 0.0);
        assert!(pinning_atom_probability(-40.0, &site_conditional(&[0.0, 0.0, 0.0], 1)) < 1e-17);
    }

    #[test]
    fn kernels_preserve_exact_densities() {
        for pot in [bump(0.5, 1.0), bump(0.2, 5f64.ln()), bump(1.0, -0.7)] {
            let l1 = strip_kernel_invariance_l1(&pot).unwrap();
            assert!(l1 < 1e-6, "{l1}");
        }
        for beta in [-1.0, 0.0, 2.0] {
            assert!(pinning_kernel_invariance_l1(beta).unwrap() < 1e-6);
        }
    }

    #[test]
    fn indicator_strip_is_refused_and_negative_fields_rejected() {
        let ind = StripPotential::new(0.5, 1.0, PotentialShape::Indicator).unwrap();
        let f = LatticeField::new(vec![0.1, 0.2]).unwrap();
        let seed = SeedSpec::new(1, 0, "g");
        assert!(matches!(gibbs_sweep_strip(&f, &ind, &seed), Err(WettingError::Unsupported(_))));
        let neg = LatticeField::new(vec![0.1, -0.2]).unwrap();
        assert!(matches!(
            gibbs_sweep_strip(&neg, &bump(0.5, 1.0), &seed),
            Err(WettingError::NegativeHeight { site: 2, .. })
        ));
        let params = PinningParams::new(0.0, 2).unwrap();
        assert!(gibbs_sweep_delta_pinning(&neg, &params, &seed).is_err());
    }

    #[test]
    fn sweeps_keep_fields_nonnegative() {
        let seed = SeedSpec::new(2, 0, "g");
        let mut f = LatticeField::zeros(6).unwrap();
        for k in 0..50 {
            f = gibbs_sweep_strip(&f, &bump(0.3, 1.5), &seed.replica(k)).unwrap();
            assert!(f.is_nonnegative());
        }
        let params = PinningParams::new(1.0, 6).unwrap();
        for k in 0..50 {
            f = gibbs_sweep_delta_pinning(&f, &params, &seed.replica(100 + k)).unwrap();
            assert!(f.is_nonnegative());
        }
    }

    #[test]
    fn free_strip_chain_gives_half_gaussian() {
        let n = 100_000;
        let pot = bump(0.5, 0.0);
        let (rows, _) = sample_static(
            1,
            &StaticTarget::Strip(pot),
            n,
            4,
            ChainSettings { burn_in: 10, thin: 1 },
            &SeedSpec::new(3, 0, "half"),
        )
        .unwrap();
        let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let ks = ks_statistic(&xs, |x| reflecting_bm_cdf(1.0, x), 0.01).unwrap();
        assert!(ks.pass, "{ks:?}");
    }

    #[test]
    fn reference_laws_start_and_stay_nonnegative() {
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let mut rng = SeedSpec::new(4, 0, "ref").stream();
        for kind in [ReferenceKind::ReflectingBm, ReferenceKind::Bessel3] {
            let law = ReferencePathLaw::new(kind, 0.3, grid).unwrap();
            let p = sample_reference_path(&law, &mut rng);
            assert_eq!(p.values[0], 0.3);
            assert!(p.values.iter().all(|&v| v >= 0.0));
            assert!(p.log_weight.is_none());
        }
        assert!(matches!(
            ReferencePathLaw::new(ReferenceKind::Meander, 0.5, grid),
            Err(WettingError::Unsupported(_))
        ));
        let law = ReferencePathLaw::new(ReferenceKind::Meander, 0.0, grid).unwrap();
        let p = sample_reference_path(&law, &mut rng);
        assert!((p.log_weight.unwrap() - (FRAC_PI_2.sqrt() / p.terminal()).ln()).abs() < 1e-14);
        let m = sample_meander_direct(&grid, &mut rng);
        assert_eq!(m[0], 0.0);
    }

    #[test]
    fn laplacian_pairing_matches_gradient_of_gaussian_energy() {
        let phi = [0.3, 1.2, 0.7, 2.0];
        let h = [0.5, -1.0, 0.25, 2.0];
        let grad: f64 = (0..4)
            .map(|i| h[i] * crate::lattice_dynamics::gaussian_gradient(&phi, i))
            .sum();
        assert!((grad + laplacian_pairing(&phi, &h)).abs() < 1e-14);
    }

    #[test]
    fn ibpf_closed_form_without_reward() {
        // β = 0: E[f′] = −f(0)/Z + E[fφ] with Z = √(π/2)
        let pot = bump(0.5, 0.0);
        let f = ExpDecay { rates: vec![] };
        let r = ibpf_residual(1, &pot, &f, &[1.0]).unwrap();
        assert!(r.residual < 1e-8, "{r:?}");
        let z = FRAC_PI_2.sqrt();
        let e_f_phi = integrate(|x| (-x).exp() * x * (-x * x / 2.0).exp(), 0.0, 40.0, 1e-15).unwrap() / z;
        assert!((r.rhs - (-1.0 / z + e_f_phi)).abs() < 1e-10);
    }

    #[test]
    fn ibpf_battery_at_one_and_two_sites() {
        let pots = [bump(0.5, 1.0), bump(0.2, 5f64.ln())];
        for pot in &pots {
            for f in functional_pool() {
                let r1 = ibpf_residual(1, pot, f.as_ref(), &[1.0]).unwrap();
                assert!(r1.residual < 1e-8, "{r1:?}");
            }
        }
        let f = ExpDecay { rates: vec![] };
        for h in [[1.0, 0.0], [0.0, 1.0], [0.5, -2.0]] {
            let r2 = ibpf_residual(2, &pots[0], &f, &h).unwrap();
            assert!(r2.residual < 1e-4, "{r2:?}");
        }
    }

    #[test]
    fn ibpf_guards() {
        let f = ExpDecay { rates: vec![] };
        assert!(matches!(
            ibpf_residual(3, &bump(0.5, 1.0), &f, &[1.0, 0.0, 0.0]),
            Err(WettingError::Unsupported(_))
        ));
        let ind = StripPotential::new(0.5, 1.0, PotentialShape::Indicator).unwrap();
        assert!(ibpf_residual(1, &ind, &f, &[1.0]).is_err());
        let r = ibpf_residual(2, &bump(0.5, 1.0), &f, &[0.0, 0.0]).unwrap();
        assert_eq!((r.lhs, r.rhs, r.residual), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ibpf_mc_zero_direction_is_exact() {
        let f = ExpDecay { rates: vec![] };
        let s = McSettings::new(3, 2000);
        let r = ibpf_residual_mc(3, &bump(0.4, 1.0), &f, &[0.0; 3], &s, &SeedSpec::new(1, 0, "mc")).unwrap();
        assert_eq!(r.residual.mean, 0.0);
        assert_eq!(r.report.lhs, 0.0);
        assert_eq!(r.report.rhs, 0.0);
    }

    #[test]
    fn ibpf_mc_agrees_with_quadrature_at_one_site() {
        let pot = bump(0.5, 1.0);
        let f = ExpDecay { rates: vec![] };
        let s = McSettings {
            samples: 200_000,
            chains: 100,
            chain: ChainSettings { burn_in: 5, thin: 1 },
            b_nodes: 24,
        };
        let mc = ibpf_residual_mc(1, &pot, &f, &[1.0], &s, &SeedSpec::new(5, 0, "mc1")).unwrap();
        let det = ibpf_residual(1, &pot, &f, &[1.0]).unwrap();
        assert!(mc.residual.compatible_with(0.0, 3.0), "{:?}", mc.residual);
        let lhs_gap = (mc.report.lhs - det.lhs).abs();
        assert!(lhs_gap < 0.02, "{lhs_gap}");
        assert!(!mc.unreliable);
        // slices at b against the quadrature slice σ_1(f|b) = f(b)e^{−b²/2}/Z
        let z = integrate_with_breaks(|x| strip_weight(&[x], &pot), &[0.0, 0.5, 40.0], 1e-14).unwrap();
        for sl in mc.slices.iter().step_by(5) {
            let exact = (-sl.level).exp() * (-sl.level * sl.level / 2.0).exp() / z;
            assert!((sl.value.mean - exact).abs() < 1e-12 + 4.0 * sl.value.se, "{sl:?} vs {exact}");
        }
    }

    #[test]
    fn zero_noise_is_a_degenerate_stream() {
        let cond = SiteConditional { mean: 0.4, var: 0.5 };
        assert_eq!(cond.sample_nonnegative(&mut ZeroNoise), 0.4);
    }
}
