//! Physical constants, external potentials, and the discretizations shared by
//! every module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp;

/// External potential `V(x)`, time independent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(deny_unknown_fields)]
pub enum Potential {
    Free,
    /// `V = m ω² x² / 2`.
    Harmonic {
        omega: f64,
    },
    /// Uniformly spaced samples on `[x_min, x_max]`, interpolated cubically and
    /// held constant beyond the ends.
    Sampled {
        x_min: f64,
        x_max: f64,
        values: Vec<f64>,
    },
}

impl Default for Potential {
    fn default() -> Self {
        Potential::Free
    }
}

impl Potential {
    pub fn value(&self, x: f64, mass: f64) -> f64 {
        match self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => 0.5 * mass * omega * omega * x * x,
            Potential::Sampled { .. } => self.sampled(x).0,
        }
    }

    pub fn gradient(&self, x: f64, mass: f64) -> f64 {
        match self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => mass * omega * omega * x,
            Potential::Sampled { .. } => self.sampled(x).1,
        }
    }

    pub fn is_free(&self) -> bool {
        matches!(self, Potential::Free)
    }

    fn sampled(&self, x: f64) -> (f64, f64) {
        let Potential::Sampled {
            x_min,
            x_max,
            values,
        } = self
        else {
            unreachable!()
        };
        let n = values.len();
        if x <= *x_min {
            return (values[0], 0.0);
        }
        if x >= *x_max {
            return (values[n - 1], 0.0);
        }
        let h = (x_max - x_min) / (n - 1) as f64;
        interp::uniform_cubic(*x_min, h, values, x)
    }

    fn validate(&self, problems: &mut Vec<String>) {
        match self {
            Potential::Free => {}
            Potential::Harmonic { omega } => {
                if !(*omega >= 0.0) {
                    problems.push(format!("harmonic omega must be >= 0 (got {omega})"));
                }
            }
            Potential::Sampled {
                x_min,
                x_max,
                values,
            } => {
                if !(x_min < x_max) {
                    problems.push("sampled potential needs x_min < x_max".into());
                }
                if values.len() < 4 {
                    problems.push("sampled potential needs at least 4 values".into());
                }
                if values.iter().any(|v| !v.is_finite()) {
                    problems.push("sampled potential has non-finite values".into());
                }
            }
        }
    }
}

/// `ħ`, `m`, and `V(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub hbar: f64,
    pub mass: f64,
    pub potential: Potential,
}

impl PhysicalParams {
    pub fn free(hbar: f64, mass: f64) -> Self {
        Self {
            hbar,
            mass,
            potential: Potential::Free,
        }
    }

    /// Natural units with no external potential.
    pub fn natural() -> Self {
        Self::free(1.0, 1.0)
    }

    pub fn potential_at(&self, x: f64) -> f64 {
        self.potential.value(x, self.mass)
    }

    pub fn potential_gradient_at(&self, x: f64) -> f64 {
        self.potential.gradient(x, self.mass)
    }

    pub fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.hbar > 0.0) {
            problems.push(format!("hbar must be > 0 (got {})", self.hbar));
        }
        if !(self.mass > 0.0) {
            problems.push(format!("mass must be > 0 (got {})", self.mass));
        }
        self.potential.validate(&mut problems);
        problems
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Uniform grid `x_i = x_min + i Δx`, `i = 0..n_points`, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl SpatialGrid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        let grid = Self {
            x_min,
            x_max,
            n_points,
        };
        let problems = grid.problems();
        if problems.is_empty() {
            Ok(grid)
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.x_min < self.x_max) {
            problems.push(format!(
                "grid needs x_min < x_max (got {} and {})",
                self.x_min, self.x_max
            ));
        }
        if self.n_points < Self::MIN_POINTS {
            problems.push(format!(
                "grid needs n_points >= {} (got {})",
                Self::MIN_POINTS,
                self.n_points
            ));
        }
        problems
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.x(i))
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Same box with the spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            n_points: 2 * (self.n_points - 1) + 1,
            ..*self
        }
    }
}

/// Uniform time base `t_k = start + k·step` for `k = 0..=steps`. `step` may be
/// negative for backward runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeBase {
    pub start: f64,
    pub step: f64,
    pub steps: usize,
}

impl TimeBase {
    pub fn new(start: f64, step: f64, steps: usize) -> Self {
        Self { start, step, steps }
    }

    /// `steps` steps of size `step` from zero.
    pub fn from_zero(step: f64, steps: usize) -> Self {
        Self::new(0.0, step, steps)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.time(k))
    }

    /// Index of a stored time, accepting roundoff-level mismatch.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = ((t - self.start) / self.step).round();
        if k < 0.0 || k > self.steps as f64 {
            return None;
        }
        let k = k as usize;
        ((self.time(k) - t).abs() <= 1e-9 * self.step.abs()).then_some(k)
    }

    pub fn span(&self) -> (f64, f64) {
        let (a, b) = (self.start, self.end());
        (a.min(b), a.max(b))
    }

    /// Every `stride`-th time.
    pub fn strided(&self, stride: usize) -> Self {
        Self::new(self.start, self.step * stride as f64, self.steps / stride)
    }
}
