//! Wavefunction-free propagation of the coupled ± congruences.
//!
//! Along each branch `s = ±` the velocity `w_s = q̇_s` obeys
//!
//! ```text
//! m ẇ_s = −∂_x B_s,   B_s = s (ħ/2) ∂_x v_p − (m/4)(w_s − v_p)² + V,
//! ```
//!
//! where `p` is the partner branch, so `B_s − V = Q_s`. Partner values at an
//! own position come from inverting the partner's label-to-position map.
//! Spatial derivatives are label derivatives divided by `J = ∂q/∂q0`. The
//! velocity-dependent force rules out a symplectic splitting, so the whole
//! state `(q±, w±, χ±)` is stepped by classic fourth-order Runge-Kutta.

use rayon::prelude::*;

use crate::congruence::{check_order, Congruence, LabelSet};
use crate::error::{Error, Result};
use crate::fd::LabelDerivative;
use crate::interp::{cubic_at, MonotoneCubic};
use crate::params::{PhysicalParams, TimeBase};
use crate::sampler::FieldSampler;

const MODULE: &str = "autonomous";

/// The plus and minus congruences on a shared time base.
#[derive(Clone, Debug)]
pub struct BiCongruence {
    pub plus: Congruence,
    pub minus: Congruence,
    /// Partner lookups that fell outside the partner hull and used linear
    /// continuation of the partner velocity.
    pub extrapolated_lookups: usize,
}

impl BiCongruence {
    pub fn from_pair(plus: Congruence, minus: Congruence) -> Result<Self> {
        if plus.time_base != minus.time_base {
            return Err(Error::precondition(
                MODULE,
                "plus and minus congruences need the same time base",
            ));
        }
        Ok(Self {
            plus,
            minus,
            extrapolated_lookups: 0,
        })
    }

    pub fn time_base(&self) -> TimeBase {
        self.plus.time_base
    }

    /// Overlap of the two position hulls at frame `k`.
    pub fn overlap(&self, k: usize) -> Result<(f64, f64)> {
        let (a, b) = (self.plus.hull(k), self.minus.hull(k));
        let (lo, hi) = (a.0.max(b.0), a.1.min(b.1));
        if lo < hi {
            Ok((lo, hi))
        } else {
            Err(Error::OverlapLost {
                time: self.plus.time_base.time(k),
            })
        }
    }
}

/// Initial data and discretization for [`propagate_autonomous`].
pub struct AutonomousSetup<'a> {
    /// `S₊0` as a sampler read at `t = start` (value and slope).
    pub s_plus0: &'a dyn FieldSampler,
    pub s_minus0: &'a dyn FieldSampler,
    pub plus_labels: LabelSet,
    pub minus_labels: LabelSet,
    pub params: PhysicalParams,
    pub start: f64,
    /// May be negative for backward propagation.
    pub dt: f64,
    pub steps: usize,
    /// Store every `stride`-th step.
    pub stride: usize,
    /// Savitzky-Golay (window 5, cubic) smoothing of `div w` before it enters
    /// the partner potential.
    pub smoothing: bool,
}

#[derive(Clone)]
struct Branch {
    labels: Vec<f64>,
    d: LabelDerivative,
}

#[derive(Clone, Debug)]
struct State {
    q: [Vec<f64>; 2],
    w: [Vec<f64>; 2],
    chi: [Vec<f64>; 2],
}

impl State {
    fn axpy(&self, a: f64, k: &State) -> State {
        let f = |x: &[Vec<f64>; 2], y: &[Vec<f64>; 2]| -> [Vec<f64>; 2] {
            [0, 1].map(|b| x[b].iter().zip(&y[b]).map(|(u, v)| u + a * v).collect())
        };
        State {
            q: f(&self.q, &k.q),
            w: f(&self.w, &k.w),
            chi: f(&self.chi, &k.chi),
        }
    }
}

/// Partner velocity and velocity gradient at `x`; linear continuation
/// outside the partner hull.
struct Partner {
    map: MonotoneCubic,
    labels: Vec<f64>,
    w: Vec<f64>,
    div: Vec<f64>,
}

impl Partner {
    fn at(&self, x: f64) -> (f64, f64, bool) {
        let (lo, hi) = self.map.range();
        if x < lo || x > hi {
            let (edge, i) = if x < lo {
                (lo, 0)
            } else {
                (hi, self.labels.len() - 1)
            };
            let v = self.w[i] + self.div[i] * (x - edge);
            return (v, self.div[i], true);
        }
        let a = self.map.inverse(x).expect("inside range");
        (
            cubic_at(&self.labels, &self.w, a).0,
            cubic_at(&self.labels, &self.div, a).0,
            false,
        )
    }
}

struct Evaluation {
    rate: State,
    extrapolated: usize,
}

/// Five-point cubic Savitzky-Golay filter for uniform labels, with the
/// one-sided fits of the same cubic at the two labels next to each end.
fn savitzky_golay(y: &[f64]) -> Vec<f64> {
    const CENTRE: [f64; 5] = [
        -3.0 / 35.0,
        12.0 / 35.0,
        17.0 / 35.0,
        12.0 / 35.0,
        -3.0 / 35.0,
    ];
    const END: [f64; 5] = [
        69.0 / 70.0,
        4.0 / 70.0,
        -6.0 / 70.0,
        4.0 / 70.0,
        -1.0 / 70.0,
    ];
    const NEXT: [f64; 5] = [
        2.0 / 35.0,
        27.0 / 35.0,
        12.0 / 35.0,
        -8.0 / 35.0,
        2.0 / 35.0,
    ];
    let n = y.len();
    if n < 5 {
        return y.to_vec();
    }
    let dot = |c: &[f64; 5], w: &mut dyn Iterator<Item = f64>| {
        c.iter().zip(w).map(|(c, v)| c * v).sum::<f64>()
    };
    (0..n)
        .map(|i| match i {
            0 => dot(&END, &mut y[..5].iter().copied()),
            1 => dot(&NEXT, &mut y[..5].iter().copied()),
            _ if i + 1 == n => dot(&END, &mut y[n - 5..].iter().rev().copied()),
            _ if i + 2 == n => dot(&NEXT, &mut y[n - 5..].iter().rev().copied()),
            _ => dot(&CENTRE, &mut y[i - 2..=i + 2].iter().copied()),
        })
        .collect()
}

fn evaluate(
    branches: &[Branch; 2],
    s: &State,
    params: &PhysicalParams,
    smoothing: bool,
    t: f64,
) -> Result<Evaluation> {
    let (hbar, m) = (params.hbar, params.mass);
    let mut jac: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut div: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for b in 0..2 {
        jac[b] = branches[b].d.apply(&s.q[b]);
        if let Some(i) = jac[b].iter().position(|&j| !(j > 0.0)) {
            return Err(Error::FocalPoint {
                module: MODULE,
                label: branches[b].labels[i],
                time: t,
                jacobian: jac[b][i],
            });
        }
        let dw = branches[b].d.apply(&s.w[b]);
        div[b] = dw.iter().zip(&jac[b]).map(|(a, j)| a / j).collect();
        if smoothing {
            div[b] = savitzky_golay(&div[b]);
        }
    }
    let partners: Vec<Partner> = (0..2)
        .map(|b| {
            let map = MonotoneCubic::with_slopes(
                branches[b].labels.clone(),
                s.q[b].clone(),
                jac[b].clone(),
            )
            .ok_or(Error::Crossing {
                module: MODULE,
                label: branches[b].labels[0],
                time: t,
            })?;
            Ok(Partner {
                map,
                labels: branches[b].labels.clone(),
                w: s.w[b].clone(),
                div: div[b].clone(),
            })
        })
        .collect::<Result<_>>()?;
    let (o0, o1) = (partners[0].map.range(), partners[1].map.range());
    if !(o0.0.max(o1.0) < o0.1.min(o1.1)) {
        return Err(Error::OverlapLost { time: t });
    }
    let mut rate = State {
        q: [s.w[0].clone(), s.w[1].clone()],
        w: [Vec::new(), Vec::new()],
        chi: [Vec::new(), Vec::new()],
    };
    let mut extrapolated = 0;
    for b in 0..2 {
        let sign = if b == 0 { 1.0 } else { -1.0 };
        let partner = &partners[1 - b];
        let looked: Vec<(f64, f64, bool)> = s.q[b].par_iter().map(|&x| partner.at(x)).collect();
        extrapolated += looked.iter().filter(|l| l.2).count();
        let bracket: Vec<f64> = looked
            .iter()
            .zip(&s.w[b])
            .zip(&s.q[b])
            .map(|((&(vp, divp, _), &w), &x)| {
                sign * 0.5 * hbar * divp - 0.25 * m * (w - vp) * (w - vp) + params.potential_at(x)
            })
            .collect();
        let db = branches[b].d.apply(&bracket);
        rate.w[b] = db.iter().zip(&jac[b]).map(|(d, j)| -d / (m * j)).collect();
        rate.chi[b] = s.w[b]
            .iter()
            .zip(&bracket)
            .map(|(w, br)| 0.5 * m * w * w - br)
            .collect();
    }
    Ok(Evaluation { rate, extrapolated })
}

/// Steps both congruences from their initial actions alone.
pub fn propagate_autonomous(setup: &AutonomousSetup<'_>) -> Result<BiCongruence> {
    setup.params.validate()?;
    if !(setup.dt.is_finite() && setup.dt != 0.0) {
        return Err(Error::precondition(
            MODULE,
            "dt must be finite and non-zero",
        ));
    }
    if setup.steps == 0 || setup.stride == 0 || setup.steps % setup.stride != 0 {
        return Err(Error::precondition(
            MODULE,
            "steps must be positive and divisible by stride",
        ));
    }
    let uniform = |l: &[f64]| {
        let h = (l[l.len() - 1] - l[0]) / (l.len() - 1) as f64;
        l.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
    };
    if setup.smoothing
        && !(uniform(setup.plus_labels.labels()) && uniform(setup.minus_labels.labels()))
    {
        return Err(Error::precondition(
            MODULE,
            "smoothing needs uniformly spaced labels",
        ));
    }
    let m = setup.params.mass;
    let branches = [&setup.plus_labels, &setup.minus_labels].map(|l| Branch {
        labels: l.labels().to_vec(),
        d: LabelDerivative::new(l.labels()),
    });
    let initial = |sampler: &dyn FieldSampler, labels: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut w = Vec::with_capacity(labels.len());
        let mut chi = Vec::with_capacity(labels.len());
        for &q0 in labels {
            let s = sampler.sample(q0, setup.start)?;
            chi.push(s.value);
            w.push(s.gradient / m);
        }
        Ok((w, chi))
    };
    let (w_plus, chi_plus) = initial(setup.s_plus0, &branches[0].labels)?;
    let (w_minus, chi_minus) = initial(setup.s_minus0, &branches[1].labels)?;
    let mut state = State {
        q: [branches[0].labels.clone(), branches[1].labels.clone()],
        w: [w_plus, w_minus],
        chi: [chi_plus, chi_minus],
    };
    let time_base = TimeBase::new(setup.start, setup.dt, setup.steps).strided(setup.stride);
    let frames = time_base.len();
    let mut stored: Vec<State> = Vec::with_capacity(frames);
    stored.push(state.clone());
    let mut extrapolated = 0usize;
    let dt = setup.dt;
    let unstable = |t: f64| Error::Instability {
        module: MODULE,
        time: t,
        detail: "non-finite trajectory state; reduce dt or increase the label count".into(),
    };
    for k in 0..setup.steps {
        let t = setup.start + k as f64 * dt;
        let k1 = evaluate(&branches, &state, &setup.params, setup.smoothing, t)?;
        let s2 = state.axpy(0.5 * dt, &k1.rate);
        let k2 = evaluate(&branches, &s2, &setup.params, setup.smoothing, t + 0.5 * dt)?;
        let s3 = state.axpy(0.5 * dt, &k2.rate);
        let k3 = evaluate(&branches, &s3, &setup.params, setup.smoothing, t + 0.5 * dt)?;
        let s4 = state.axpy(dt, &k3.rate);
        let k4 = evaluate(&branches, &s4, &setup.params, setup.smoothing, t + dt)?;
        extrapolated += k1.extrapolated + k2.extrapolated + k3.extrapolated + k4.extrapolated;
        state = state
            .axpy(dt / 6.0, &k1.rate)
            .axpy(dt / 3.0, &k2.rate)
            .axpy(dt / 3.0, &k3.rate)
            .axpy(dt / 6.0, &k4.rate);
        let t1 = t + dt;
        let finite = state
            .q
            .iter()
            .chain(&state.w)
            .chain(&state.chi)
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(unstable(t1));
        }
        if (k + 1) % setup.stride == 0 {
            stored.push(state.clone());
        }
    }
    let build = |b: usize, labels: &LabelSet| -> Congruence {
        let d = &branches[b].d;
        Congruence {
            labels: labels.clone(),
            time_base,
            positions: stored.iter().map(|s| s.q[b].clone()).collect(),
            velocities: stored.iter().map(|s| s.w[b].clone()).collect(),
            jacobians: stored.iter().map(|s| d.apply(&s.q[b])).collect(),
            actions: stored.iter().map(|s| s.chi[b].clone()).collect(),
        }
    };
    let plus = build(0, &setup.plus_labels);
    let minus = build(1, &setup.minus_labels);
    for c in [&plus, &minus] {
        check_order(c, MODULE)?;
        for (k, j) in c.jacobians.iter().enumerate() {
            if let Some(i) = j.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::FocalPoint {
                    module: MODULE,
                    label: c.labels.labels()[i],
                    time: time_base.time(k),
                    jacobian: j[i],
                });
            }
        }
    }
    let bi = BiCongruence {
        plus,
        minus,
        extrapolated_lookups: extrapolated,
    };
    for k in 0..frames {
        bi.overlap(k)?;
    }
    Ok(bi)
}

/// The label correspondence `q₋0(q₊0)` at one stored time: both labels name
/// trajectories at the same position.
pub struct CrossMap {
    plus_map: MonotoneCubic,
    minus_map: MonotoneCubic,
    time: f64,
    overlap: (f64, f64),
}

impl CrossMap {
    pub fn time(&self) -> f64 {
        self.time
    }

    /// Position range covered by both congruences.
    pub fn overlap(&self) -> (f64, f64) {
        self.overlap
    }

    fn outside(&self, x: f64) -> Error {
        Error::OutsideHull {
            module: MODULE,
            x,
            time: self.time,
            lo: self.overlap.0,
            hi: self.overlap.1,
        }
    }

    /// `q₋0` of the minus trajectory at the position of plus label `q_plus0`.
    pub fn minus_label(&self, q_plus0: f64) -> Result<f64> {
        let x = self
            .plus_map
            .eval(q_plus0)
            .ok_or_else(|| self.outside(q_plus0))?;
        self.minus_map.inverse(x).ok_or_else(|| self.outside(x))
    }

    /// `q₊0` of the plus trajectory at the position of minus label `q_minus0`.
    pub fn plus_label(&self, q_minus0: f64) -> Result<f64> {
        let x = self
            .minus_map
            .eval(q_minus0)
            .ok_or_else(|| self.outside(q_minus0))?;
        self.plus_map.inverse(x).ok_or_else(|| self.outside(x))
    }

    /// Plus labels whose trajectories lie inside the overlap.
    pub fn plus_labels_in_overlap(&self, labels: &[f64]) -> Vec<f64> {
        labels
            .iter()
            .cloned()
            .filter(|&q0| {
                self.plus_map
                    .eval(q0)
                    .is_some_and(|x| x >= self.overlap.0 && x <= self.overlap.1)
            })
            .collect()
    }
}

pub fn cross_map(bi: &BiCongruence, t: f64) -> Result<CrossMap> {
    let k = bi.plus.frame(t)?;
    let overlap = bi.overlap(k)?;
    Ok(CrossMap {
        plus_map: bi.plus.position_map(k)?,
        minus_map: bi.minus.position_map(k)?,
        time: bi.plus.time_base.time(k),
        overlap,
    })
}
