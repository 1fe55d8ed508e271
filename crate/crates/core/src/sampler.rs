//! Point samplers for scalar fields `f(x, t)` and their x-gradients.
//!
//! Trajectory integration only ever needs a field and its slope at scattered
//! points, so closed forms, grid series, and linear combinations of either
//! share one trait.

use crate::error::{Error, Result};
use crate::fields::{FieldSeries, FieldSnapshot};
use crate::interp::lagrange4;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub gradient: f64,
}

pub trait FieldSampler: Sync {
    fn sample(&self, x: f64, t: f64) -> Result<Sample>;

    fn value(&self, x: f64, t: f64) -> Result<f64> {
        self.sample(x, t).map(|s| s.value)
    }

    /// Closed time interval on which the sampler is defined; `None` means
    /// unbounded.
    fn time_span(&self) -> Option<(f64, f64)> {
        None
    }
}

impl<T: FieldSampler + ?Sized> FieldSampler for &T {
    fn sample(&self, x: f64, t: f64) -> Result<Sample> {
        (**self).sample(x, t)
    }

    fn time_span(&self) -> Option<(f64, f64)> {
        (**self).time_span()
    }
}

/// Closure-backed sampler.
pub struct FnSampler<F>(pub F);

impl<F> FieldSampler for FnSampler<F>
where
    F: Fn(f64, f64) -> Sample + Sync,
{
    fn sample(&self, x: f64, t: f64) -> Result<Sample> {
        Ok((self.0)(x, t))
    }
}

/// The identically zero field.
#[derive(Clone, Copy, Debug, Default)]
pub struct Zero;

impl FieldSampler for Zero {
    fn sample(&self, _x: f64, _t: f64) -> Result<Sample> {
        Ok(Sample::default())
    }
}

/// `Σ c_k f_k(x, t)`.
#[derive(Default)]
pub struct LinearCombination<'a> {
    terms: Vec<(f64, &'a dyn FieldSampler)>,
}

impl<'a> LinearCombination<'a> {
    pub fn new() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn term(mut self, coefficient: f64, field: &'a dyn FieldSampler) -> Self {
        self.terms.push((coefficient, field));
        self
    }
}

impl FieldSampler for LinearCombination<'_> {
    fn sample(&self, x: f64, t: f64) -> Result<Sample> {
        let mut out = Sample::default();
        for (c, f) in &self.terms {
            let s = f.sample(x, t)?;
            out.value += c * s.value;
            out.gradient += c * s.gradient;
        }
        Ok(out)
    }

    fn time_span(&self) -> Option<(f64, f64)> {
        self.terms
            .iter()
            .filter_map(|(_, f)| f.time_span())
            .reduce(|a, b| (a.0.max(b.0), a.1.min(b.1)))
    }
}

/// Which array of a [`FieldSnapshot`] a [`SeriesSampler`] reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesField {
    Rho,
    S,
    SPlus,
    SMinus,
    V,
    VPlus,
    VMinus,
    U,
    Q,
    QPlus,
    QMinus,
    /// `½mv² − Q − V`.
    Lagrangian,
    /// `½mv₊² − Q₊ − V`.
    LagrangianPlus,
    /// `½mv₋² − Q₋ − V`.
    LagrangianMinus,
}

/// Samples a [`FieldSeries`]: linear in time between snapshots, four-point
/// cubic in space. Every stencil point must be valid in both bracketing
/// snapshots.
pub struct SeriesSampler<'a> {
    series: &'a FieldSeries,
    field: SeriesField,
    scale: f64,
    potential: Vec<f64>,
}

impl<'a> SeriesSampler<'a> {
    pub fn new(series: &'a FieldSeries, field: SeriesField) -> Self {
        let grid = series.grid();
        let potential = grid
            .points()
            .map(|x| series.params.potential_at(x))
            .collect();
        Self {
            series,
            field,
            scale: 1.0,
            potential,
        }
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        self.scale *= scale;
        self
    }

    fn point(&self, snap: &FieldSnapshot, i: usize) -> f64 {
        let m = self.series.params.mass;
        match self.field {
            SeriesField::Rho => snap.rho[i],
            SeriesField::S => snap.s[i],
            SeriesField::SPlus => snap.s_plus[i],
            SeriesField::SMinus => snap.s_minus[i],
            SeriesField::V => snap.v[i],
            SeriesField::VPlus => snap.v_plus[i],
            SeriesField::VMinus => snap.v_minus[i],
            SeriesField::U => snap.u[i],
            SeriesField::Q => snap.q[i],
            SeriesField::QPlus => snap.q_plus[i],
            SeriesField::QMinus => snap.q_minus[i],
            SeriesField::Lagrangian => 0.5 * m * snap.v[i].powi(2) - snap.q[i] - self.potential[i],
            SeriesField::LagrangianPlus => {
                0.5 * m * snap.v_plus[i].powi(2) - snap.q_plus[i] - self.potential[i]
            }
            SeriesField::LagrangianMinus => {
                0.5 * m * snap.v_minus[i].powi(2) - snap.q_minus[i] - self.potential[i]
            }
        }
    }

    fn spatial(&self, snap: &FieldSnapshot, start: usize, x: f64, t: f64) -> Result<Sample> {
        let grid = snap.grid;
        let mut xs = [0.0; 4];
        let mut ys = [0.0; 4];
        for j in 0..4 {
            let i = start + j;
            if !snap.valid[i] {
                return Err(Error::OutsideValid { x, t });
            }
            xs[j] = grid.x(i);
            ys[j] = self.point(snap, i);
        }
        let (value, gradient) = lagrange4(&xs, &ys, x);
        Ok(Sample { value, gradient })
    }
}

impl FieldSampler for SeriesSampler<'_> {
    fn sample(&self, x: f64, t: f64) -> Result<Sample> {
        let tb = self.series.time_base;
        let snaps = &self.series.snapshots;
        let (start, end) = tb.span();
        let slack = 1e-9 * tb.step.abs();
        if !(t >= start - slack && t <= end + slack) {
            return Err(Error::OutsideTime { t, start, end });
        }
        let grid = self.series.grid();
        let pos = (x - grid.x_min) / grid.spacing();
        if !(pos >= 1.0 && pos <= (grid.n_points - 2) as f64) {
            return Err(Error::OutsideValid { x, t });
        }
        let i = (pos.floor() as usize).min(grid.n_points - 3);
        let stencil = i - 1;

        let s = ((t - tb.start) / tb.step).clamp(0.0, tb.steps as f64);
        let k = (s.floor() as usize).min(tb.steps.saturating_sub(1));
        let w = s - k as f64;
        let a = self.spatial(&snaps[k], stencil, x, t)?;
        let out = if w <= 1e-12 || snaps.len() == 1 {
            a
        } else if w >= 1.0 - 1e-12 {
            self.spatial(&snaps[k + 1], stencil, x, t)?
        } else {
            let b = self.spatial(&snaps[k + 1], stencil, x, t)?;
            Sample {
                value: (1.0 - w) * a.value + w * b.value,
                gradient: (1.0 - w) * a.gradient + w * b.gradient,
            }
        };
        Ok(Sample {
            value: self.scale * out.value,
            gradient: self.scale * out.gradient,
        })
    }

    fn time_span(&self) -> Option<(f64, f64)> {
        Some(self.series.time_base.span())
    }
}
