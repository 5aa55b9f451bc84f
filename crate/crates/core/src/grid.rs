use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniform time grid `t0 + k·dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("steps", "must be positive"));
        }
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(invalid("t1", format!("need finite t0 < t1, got [{t0}, {t1}]")));
        }
        Ok(Self { t0, t1, steps })
    }

    /// The grid on `[0, 1]` with step closest to (and not above) `dt`.
    pub fn unit_with_step(dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        Self::new(0.0, 1.0, (1.0 / dt - 1e-9).ceil().max(1.0) as usize)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    /// Index of the grid point nearest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        (((t - self.t0) / self.dt()).round().max(0.0) as usize).min(self.steps)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.time(k))
    }
}
