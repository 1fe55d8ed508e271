//! Labeled trajectory ensembles integrated along a sampled velocity field.
//!
//! Each label `q0` carries the state `(q, J, χ)` with
//!
//! ```text
//! dq/dt = v(q, t),   dJ/dt = ∂v/∂x (q, t) J,   dχ/dt = L(q, t),
//! ```
//!
//! stepped by classic fourth-order Runge-Kutta.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::LabelDerivative;
use crate::interp::{cubic_at, MonotoneCubic};
use crate::params::{SpatialGrid, TimeBase};
use crate::sampler::FieldSampler;

const MODULE: &str = "congruence";

/// Strictly increasing initial positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LabelSet {
    labels: Vec<f64>,
}

impl TryFrom<Vec<f64>> for LabelSet {
    type Error = Error;
    fn try_from(labels: Vec<f64>) -> Result<Self> {
        Self::new(labels)
    }
}

impl From<LabelSet> for Vec<f64> {
    fn from(l: LabelSet) -> Self {
        l.labels
    }
}

/// How the label span is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpanRule {
    /// Outermost grid points where `ρ0 ≥ fraction · max ρ0`.
    DensityFraction {
        fraction: f64,
    },
    Explicit {
        min: f64,
        max: f64,
    },
}

impl Default for SpanRule {
    fn default() -> Self {
        SpanRule::DensityFraction { fraction: 1e-6 }
    }
}

impl SpanRule {
    pub fn problems(&self) -> Vec<String> {
        match *self {
            SpanRule::DensityFraction { fraction } if !(fraction > 0.0 && fraction < 1.0) => {
                vec![format!(
                    "label density fraction must lie in (0, 1) (got {fraction})"
                )]
            }
            SpanRule::Explicit { min, max } if !(min < max) => {
                vec![format!("label span needs min < max (got [{min}, {max}])")]
            }
            _ => Vec::new(),
        }
    }

    pub fn labels(&self, grid: &SpatialGrid, rho0: &[f64], count: usize) -> Result<LabelSet> {
        match *self {
            SpanRule::DensityFraction { fraction } => {
                LabelSet::from_density(grid, rho0, fraction, count)
            }
            SpanRule::Explicit { min, max } => LabelSet::uniform(min, max, count),
        }
    }
}

impl LabelSet {
    pub const MIN_LABELS: usize = 5;

    pub fn new(labels: Vec<f64>) -> Result<Self> {
        if labels.len() < Self::MIN_LABELS {
            return Err(Error::precondition(
                MODULE,
                format!(
                    "need at least {} labels (got {})",
                    Self::MIN_LABELS,
                    labels.len()
                ),
            ));
        }
        if labels.iter().any(|l| !l.is_finite()) || labels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::precondition(
                MODULE,
                "labels must be finite and strictly increasing",
            ));
        }
        Ok(Self { labels })
    }

    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Self::new(vec![lo; count]);
        }
        let h = (hi - lo) / (count - 1) as f64;
        Self::new(
            (0..count)
                .map(|i| {
                    if i + 1 == count {
                        hi
                    } else {
                        lo + i as f64 * h
                    }
                })
                .collect(),
        )
    }

    /// Uniform labels between the outermost grid points where
    /// `rho0 ≥ fraction · max rho0`.
    pub fn from_density(
        grid: &SpatialGrid,
        rho0: &[f64],
        fraction: f64,
        count: usize,
    ) -> Result<Self> {
        let peak = rho0.iter().cloned().fold(0.0, f64::max);
        let threshold = fraction * peak;
        let first = rho0.iter().position(|&r| r >= threshold);
        let last = rho0.iter().rposition(|&r| r >= threshold);
        match (first, last) {
            (Some(a), Some(b)) if b > a => Self::uniform(grid.x(a), grid.x(b), count),
            _ => Err(Error::precondition(
                MODULE,
                "density threshold leaves no label span",
            )),
        }
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.labels[0], self.labels[self.labels.len() - 1])
    }

    pub fn contains(&self, q0: f64) -> bool {
        let (a, b) = self.span();
        q0 >= a && q0 <= b
    }
}

/// A labeled trajectory ensemble stored as frames `[time][label]`.
#[derive(Clone, Debug)]
pub struct Congruence {
    pub labels: LabelSet,
    pub time_base: TimeBase,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub jacobians: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
}

impl Congruence {
    /// Frame index of a stored time.
    pub fn frame(&self, t: f64) -> Result<usize> {
        self.time_base.index_of(t).ok_or_else(|| {
            Error::precondition(
                MODULE,
                format!("t = {t} is not a stored time of the congruence"),
            )
        })
    }

    /// Position hull at frame `k`.
    pub fn hull(&self, k: usize) -> (f64, f64) {
        let p = &self.positions[k];
        (p[0], p[p.len() - 1])
    }

    /// Label-to-position map at frame `k`: cubic Hermite segments with the
    /// stored Jacobians as slopes, limited to stay monotone.
    pub fn position_map(&self, k: usize) -> Result<MonotoneCubic> {
        MonotoneCubic::with_slopes(
            self.labels.labels().to_vec(),
            self.positions[k].clone(),
            self.jacobians[k].clone(),
        )
        .ok_or(Error::Crossing {
            module: MODULE,
            label: self.labels.labels()[0],
            time: self.time_base.time(k),
        })
    }

    /// Label whose trajectory occupies `x` at stored time `t`.
    pub fn invert_labels(&self, x: f64, t: f64) -> Result<f64> {
        let k = self.frame(t)?;
        self.invert_at_frame(&self.position_map(k)?, x, k)
    }

    pub(crate) fn invert_at_frame(&self, map: &MonotoneCubic, x: f64, k: usize) -> Result<f64> {
        let (lo, hi) = map.range();
        map.inverse(x).ok_or(Error::OutsideHull {
            module: MODULE,
            x,
            time: self.time_base.time(k),
            lo,
            hi,
        })
    }

    /// Any per-label quantity of frame `k` at an arbitrary label, by local
    /// cubic interpolation.
    pub fn at_label(&self, values: &[f64], q0: f64) -> f64 {
        cubic_at(self.labels.labels(), values, q0).0
    }

    /// Action at label `q0`, frame `k`: cubic Hermite with the label
    /// gradient `m q̇ J`.
    pub fn action_at(&self, k: usize, q0: f64, mass: f64) -> f64 {
        let labels = self.labels.labels();
        let i = crate::interp::interval(labels, q0);
        let grad = |j: usize| mass * self.velocities[k][j] * self.jacobians[k][j];
        crate::interp::hermite(
            labels[i],
            labels[i + 1],
            self.actions[k][i],
            self.actions[k][i + 1],
            grad(i),
            grad(i + 1),
            q0,
        )
        .0
    }

    /// `ρ0(q0(x,t)) / J(q0(x,t), t)`.
    pub fn trajectory_density(&self, rho0: impl Fn(f64) -> f64, x: f64, t: f64) -> Result<f64> {
        let k = self.frame(t)?;
        let q0 = self.invert_at_frame(&self.position_map(k)?, x, k)?;
        Ok(rho0(q0) / self.at_label(&self.jacobians[k], q0))
    }

    /// Largest relative gap between the variational Jacobian and the label
    /// finite difference of positions, over interior labels and all frames.
    pub fn jacobian_consistency(&self) -> f64 {
        let d = LabelDerivative::new(self.labels.labels());
        let n = self.labels.len();
        let mut worst = 0.0f64;
        for (p, j) in self.positions.iter().zip(&self.jacobians) {
            let fd = d.apply(p);
            for i in 2..n - 2 {
                worst = worst.max((fd[i] - j[i]).abs() / j[i].abs());
            }
        }
        worst
    }

    /// Largest gap between the label finite difference of `χ` and
    /// `m q̇ J`, over interior labels and all frames, relative to the largest
    /// `|m q̇ J|` of the whole run (the product vanishes pointwise where
    /// `q̇ = 0`, and for whole frames in special cases).
    pub fn action_gradient_error(&self, mass: f64) -> f64 {
        let d = LabelDerivative::new(self.labels.labels());
        let n = self.labels.len();
        let expected: Vec<Vec<f64>> = (0..self.time_base.len())
            .map(|k| {
                (0..n)
                    .map(|i| mass * self.velocities[k][i] * self.jacobians[k][i])
                    .collect()
            })
            .collect();
        let scale = expected
            .iter()
            .flatten()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for (k, e) in expected.iter().enumerate() {
            let fd = d.apply(&self.actions[k]);
            for i in 2..n - 2 {
                worst = worst.max((fd[i] - e[i]).abs() / scale);
            }
        }
        worst
    }

    /// Trajectory of one label as `(q, q̇, J, χ)` per frame.
    pub fn trajectory(&self, i: usize) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        (0..self.time_base.len()).map(move |k| {
            (
                self.positions[k][i],
                self.velocities[k][i],
                self.jacobians[k][i],
                self.actions[k][i],
            )
        })
    }
}

/// Action accumulated along each trajectory: rate `L(q, t)` and initial
/// values per label.
pub struct ActionSpec<'a> {
    pub rate: &'a dyn FieldSampler,
    pub initial: Vec<f64>,
}

/// Integrates the congruence of `velocity` through `labels` over `times`.
pub fn integrate_congruence(
    velocity: &dyn FieldSampler,
    labels: &LabelSet,
    times: TimeBase,
    action: Option<ActionSpec<'_>>,
) -> Result<Congruence> {
    if times.steps == 0 || !(times.step > 0.0) {
        return Err(Error::precondition(
            MODULE,
            "times need at least one positive step",
        ));
    }
    for span in [
        velocity.time_span(),
        action.as_ref().and_then(|a| a.rate.time_span()),
    ]
    .into_iter()
    .flatten()
    {
        let (a, b) = times.span();
        let slack = 1e-9 * times.step;
        if a < span.0 - slack || b > span.1 + slack {
            return Err(Error::precondition(
                MODULE,
                format!(
                    "times [{a}, {b}] exceed the sampler span [{}, {}]",
                    span.0, span.1
                ),
            ));
        }
    }
    if let Some(a) = &action {
        if a.initial.len() != labels.len() {
            return Err(Error::precondition(
                MODULE,
                "initial actions must match the labels",
            ));
        }
    }
    let rate = action.as_ref().map(|a| a.rate);
    let tracks = labels
        .labels()
        .par_iter()
        .enumerate()
        .map(|(i, &q0)| {
            let chi0 = action.as_ref().map_or(0.0, |a| a.initial[i]);
            integrate_label(velocity, rate, q0, chi0, times)
        })
        .collect::<Result<Vec<_>>>()?;
    let frames = times.len();
    let n = labels.len();
    let mut c = Congruence {
        labels: labels.clone(),
        time_base: times,
        positions: vec![vec![0.0; n]; frames],
        velocities: vec![vec![0.0; n]; frames],
        jacobians: vec![vec![0.0; n]; frames],
        actions: vec![vec![0.0; n]; frames],
    };
    for (i, track) in tracks.into_iter().enumerate() {
        for (k, [q, qd, j, chi]) in track.into_iter().enumerate() {
            c.positions[k][i] = q;
            c.velocities[k][i] = qd;
            c.jacobians[k][i] = j;
            c.actions[k][i] = chi;
        }
    }
    check_order(&c, MODULE)?;
    Ok(c)
}

/// Errors unless positions are strictly increasing in label at every frame.
pub(crate) fn check_order(c: &Congruence, module: &'static str) -> Result<()> {
    for (k, p) in c.positions.iter().enumerate() {
        if let Some(i) = p.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Crossing {
                module,
                label: c.labels.labels()[i],
                time: c.time_base.time(k),
            });
        }
    }
    Ok(())
}

fn integrate_label(
    velocity: &dyn FieldSampler,
    rate: Option<&dyn FieldSampler>,
    q0: f64,
    chi0: f64,
    times: TimeBase,
) -> Result<Vec<[f64; 4]>> {
    let truncated = |e: Error, t: f64| match e {
        Error::OutsideValid { .. } | Error::OutsideTime { .. } => Error::Truncation {
            module: MODULE,
            label: q0,
            time: t,
        },
        other => other,
    };
    // derivative of (q, J, χ) and the velocity itself
    let deriv = |q: f64, j: f64, t: f64| -> Result<([f64; 3], f64)> {
        let s = velocity.sample(q, t).map_err(|e| truncated(e, t))?;
        let l = match rate {
            Some(r) => r.value(q, t).map_err(|e| truncated(e, t))?,
            None => 0.0,
        };
        Ok(([s.value, s.gradient * j, l], s.value))
    };
    let dt = times.step;
    let mut out = Vec::with_capacity(times.len());
    let (mut q, mut j, mut chi) = (q0, 1.0, chi0);
    let (_, v0) = deriv(q, j, times.start)?;
    out.push([q, v0, j, chi]);
    for k in 0..times.steps {
        let t = times.time(k);
        let (k1, _) = deriv(q, j, t)?;
        let (k2, _) = deriv(q + 0.5 * dt * k1[0], j + 0.5 * dt * k1[1], t + 0.5 * dt)?;
        let (k3, _) = deriv(q + 0.5 * dt * k2[0], j + 0.5 * dt * k2[1], t + 0.5 * dt)?;
        let (k4, _) = deriv(q + dt * k3[0], j + dt * k3[1], t + dt)?;
        q += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        j += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        chi += dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]);
        let t1 = times.time(k + 1);
        if !(q.is_finite() && j.is_finite() && chi.is_finite()) {
            return Err(Error::Instability {
                module: MODULE,
                time: t1,
                detail: format!("non-finite state for label {q0}"),
            });
        }
        if !(j > 0.0) {
            return Err(Error::FocalPoint {
                module: MODULE,
                label: q0,
                time: t1,
                jacobian: j,
            });
        }
        let (_, v) = deriv(q, j, t1)?;
        out.push([q, v, j, chi]);
    }
    Ok(out)
}
