//! Sine-basis coefficients `⟨f, e_n⟩`, `e_n(θ) = √2 sin(nπθ)`, and the
//! diagonal negative Sobolev norms `‖f‖²_{−γ} = Σ n^{−2γ} ⟨f, e_n⟩²`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{InterpolatedPath, PathKind};

/// Spectral cutoff used when callers do not pick one.
pub const DEFAULT_CUTOFF: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralVector {
    coeffs: Vec<f64>,
}

impl SpectralVector {
    /// `coeffs[0]` is the coefficient of `e_1`.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("cutoff", "must be at least 1"));
        }
        Ok(Self { coeffs })
    }

    /// The basis vector `e_n` truncated at `cutoff`.
    pub fn unit(n: usize, cutoff: usize) -> Result<Self> {
        if n == 0 || n > cutoff {
            return Err(invalid("n", format!("mode {n} outside 1..={cutoff}")));
        }
        let mut coeffs = vec![0.0; cutoff];
        coeffs[n - 1] = 1.0;
        Self::new(coeffs)
    }

    pub fn cutoff(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `⟨f, e_n⟩` for `n ≥ 1`.
    pub fn coeff(&self, n: usize) -> f64 {
        self.coeffs[n - 1]
    }

    pub fn negative_sobolev_norm(&self, gamma: f64) -> Result<f64> {
        negative_sobolev_norm(self, gamma)
    }
}

/// `sin u − u cos u`, accurate for small `u`.
fn sin_minus_ucos(u: f64) -> f64 {
    if u.abs() < 1e-2 {
        let u2 = u * u;
        u * u2 * (1.0 / 3.0 - u2 * (1.0 / 30.0 - u2 / 840.0))
    } else {
        u.sin() - u * u.cos()
    }
}

/// Exact `∫ path · e_n` per segment, for `n = 1..=cutoff`.
pub fn sine_coefficients(path: &InterpolatedPath, cutoff: usize) -> Result<SpectralVector> {
    if cutoff == 0 {
        return Err(invalid("cutoff", "must be at least 1"));
    }
    let m = path.resolution();
    let h = 1.0 / m as f64;
    let d = 0.5 * h;
    let v = path.values();
    let mut coeffs = Vec::with_capacity(cutoff);
    for n in 1..=cutoff {
        let k = n as f64 * PI;
        let (skd, g) = ((k * d).sin(), sin_minus_ucos(k * d));
        let mut acc = 0.0;
        for j in 0..m {
            let c = (j as f64 + 0.5) * h;
            let (s, co) = (k * c).sin_cos();
            match path.kind() {
                PathKind::Affine => {
                    let mid = 0.5 * (v[j] + v[j + 1]);
                    let slope = (v[j + 1] - v[j]) / h;
                    acc += mid * 2.0 * s * skd / k + slope * co * 2.0 * g / (k * k);
                }
                PathKind::CagladConstant => {
                    acc += v[j + 1] * 2.0 * s * skd / k;
                }
            }
        }
        coeffs.push(SQRT_2 * acc);
    }
    SpectralVector::new(coeffs)
}

/// `sqrt(Σ_{n ≤ K} n^{−2γ} coeffs[n]²)`.
pub fn negative_sobolev_norm(v: &SpectralVector, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(invalid("gamma", format!("must be nonnegative, got {gamma}")));
    }
    let sum: f64 = v
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| ((i + 1) as f64).powf(-2.0 * gamma) * c * c)
        .sum();
    Ok(sum.sqrt())
}
