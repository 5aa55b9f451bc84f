//! Lattice configurations and their rescaled path embeddings.
//!
//! A configuration `φ ∈ ℝ₊ᴺ` is carried with the implicit anchor `φ_0 = 0`.
//! [`interpolate_lattice`] realizes the diffusive rescaling
//! `y ↦ φ_⌊Ny⌋/√N + (Ny − ⌊Ny⌋)(φ_⌊Ny⌋+1 − φ_⌊Ny⌋)/√N` on a uniform grid,
//! [`embed_caglad`] the piecewise constant variant `y ↦ φ_⌈Ny⌉/√N`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, WettingError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeField {
    n: usize,
    values: Vec<f64>,
}

impl LatticeField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("n", "a lattice field needs at least one site"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid("values", format!("non-finite height {v}")));
        }
        Ok(Self {
            n: values.len(),
            values,
        })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![0.0; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Height at site `i ∈ 0..=n`, with the anchor `φ_0 = 0`.
    #[inline]
    pub fn height(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.values[i - 1]
        }
    }

    /// Fails with the first site (1-based) holding a negative height.
    pub fn check_nonnegative(&self) -> Result<()> {
        match self.values.iter().position(|&v| v < 0.0) {
            Some(i) => Err(WettingError::NegativeHeight {
                site: i + 1,
                value: self.values[i],
            }),
            None => Ok(()),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    /// Continuous, piecewise affine between grid points.
    Affine,
    /// Left-continuous piecewise constant: value `values[j]` on `((j-1)/M, j/M]`.
    CagladConstant,
}

/// An element of `L²(0,1)` stored by its values on the uniform grid `j/M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolatedPath {
    resolution: usize,
    values: Vec<f64>,
    kind: PathKind,
}

impl InterpolatedPath {
    pub fn new(values: Vec<f64>, kind: PathKind) -> Result<Self> {
        if values.len() < 2 {
            return Err(invalid("resolution", "a path needs at least two grid values"));
        }
        Ok(Self {
            resolution: values.len() - 1,
            values,
            kind,
        })
    }

    /// Samples `f` at `j/M`, `j = 0..=M`, as an affine path.
    pub fn from_fn(resolution: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if resolution == 0 {
            return Err(invalid("resolution", "must be positive"));
        }
        let m = resolution as f64;
        let values = (0..=resolution).map(|j| f(j as f64 / m)).collect();
        Self::new(values, PathKind::Affine)
    }

    pub fn zero(resolution: usize, kind: PathKind) -> Result<Self> {
        Self::new(vec![0.0; resolution + 1], kind)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    /// Evaluates the path at `y ∈ [0,1]` (clamped).
    pub fn eval(&self, y: f64) -> f64 {
        let m = self.resolution as f64;
        let s = (y.clamp(0.0, 1.0)) * m;
        match self.kind {
            PathKind::Affine => {
                let j = (s.floor() as usize).min(self.resolution - 1);
                let frac = s - j as f64;
                self.values[j] + frac * (self.values[j + 1] - self.values[j])
            }
            PathKind::CagladConstant => {
                let j = (s.ceil() as usize).min(self.resolution);
                self.values[j]
            }
        }
    }

    /// `∫₀¹ path²`, exact for both kinds.
    pub fn l2_norm_sq(&self) -> f64 {
        let h = 1.0 / self.resolution as f64;
        match self.kind {
            PathKind::Affine => self
                .values
                .windows(2)
                .map(|w| h * (w[0] * w[0] + w[0] * w[1] + w[1] * w[1]) / 3.0)
                .sum(),
            PathKind::CagladConstant => self.values[1..].iter().map(|v| h * v * v).sum(),
        }
    }

    /// Pointwise difference of two paths on the same grid.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.resolution != other.resolution || self.kind != other.kind {
            return Err(invalid("path", "difference of paths on different grids"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Self::new(values, self.kind)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }
}

fn check_resolution(field: &LatticeField, resolution: usize) -> Result<usize> {
    let n = field.n();
    if resolution == 0 || !resolution.is_multiple_of(n) {
        return Err(WettingError::GridMismatch { resolution, n });
    }
    Ok(resolution / n)
}

/// Affine rescaling map evaluated on the grid `j/resolution`.
pub fn interpolate_lattice(field: &LatticeField, resolution: usize) -> Result<InterpolatedPath> {
    let per_site = check_resolution(field, resolution)?;
    let scale = 1.0 / (field.n() as f64).sqrt();
    let mut values = Vec::with_capacity(resolution + 1);
    for j in 0..=resolution {
        let i = j / per_site;
        let r = j % per_site;
        let v = if r == 0 {
            field.height(i)
        } else {
            let frac = r as f64 / per_site as f64;
            let lo = field.height(i);
            lo + frac * (field.height(i + 1) - lo)
        };
        values.push(v * scale);
    }
    InterpolatedPath::new(values, PathKind::Affine)
}

/// Piecewise constant, left-continuous embedding `y ↦ φ_⌈Ny⌉/√N`.
pub fn embed_caglad(field: &LatticeField, resolution: usize) -> Result<InterpolatedPath> {
    let per_site = check_resolution(field, resolution)?;
    let scale = 1.0 / (field.n() as f64).sqrt();
    let values = (0..=resolution)
        .map(|j| field.height(j.div_ceil(per_site)) * scale)
        .collect();
    InterpolatedPath::new(values, PathKind::CagladConstant)
}
