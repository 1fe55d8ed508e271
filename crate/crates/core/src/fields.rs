//! Eulerian fields of a wavefunction snapshot and the residuals of the
//! field equations they satisfy.
//!
//! With `ψ = √ρ e^{iS/ħ}` and `S± = S ± (ħ/2) ln(ρ/ρ_ref)`:
//!
//! ```text
//! v± = ∂S±/m,   v = (v₊ + v₋)/2,   u = v₊ − v₋ = (ħ/m) ∂ln ρ,
//! Q  = −(ħ²/2m) ∂²√ρ / √ρ,
//! Q± = ±(ħ/2m) ∂²S∓ − (1/4m) [∂(S₊ − S₋)]².
//! ```
//!
//! The first term of `Q±` carries the sign that makes the average of the two
//! HJ equations the polar HJ equation and their difference the continuity
//! equation. [`QSign::Printed`] flips it, for comparison only.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fd::masked_derivatives;
use crate::params::{PhysicalParams, SpatialGrid, TimeBase};
use crate::reference::{WaveSeries, WaveSnapshot};

const MODULE: &str = "fields";

/// Default density threshold relative to the peak of the initial density.
pub const DEFAULT_RHO_MIN_RATIO: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct FieldSnapshot {
    pub grid: SpatialGrid,
    pub time: f64,
    pub rho: Vec<f64>,
    pub s: Vec<f64>,
    pub s_plus: Vec<f64>,
    pub s_minus: Vec<f64>,
    pub v: Vec<f64>,
    pub v_plus: Vec<f64>,
    pub v_minus: Vec<f64>,
    pub u: Vec<f64>,
    pub q: Vec<f64>,
    pub q_plus: Vec<f64>,
    pub q_minus: Vec<f64>,
    /// `ρ ≥ ρ_min` and enough valid neighbours for derivatives. Every other
    /// field except `rho` is NaN where this is false.
    pub valid: Vec<bool>,
}

impl FieldSnapshot {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn valid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.valid
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| i)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

#[derive(Clone, Debug)]
pub struct FieldSeries {
    pub params: PhysicalParams,
    pub time_base: TimeBase,
    pub rho_ref: f64,
    pub rho_min: f64,
    pub snapshots: Vec<FieldSnapshot>,
}

impl FieldSeries {
    pub fn grid(&self) -> SpatialGrid {
        self.snapshots[0].grid
    }

    pub fn at_time(&self, t: f64) -> Option<&FieldSnapshot> {
        self.time_base.index_of(t).map(|k| &self.snapshots[k])
    }

    /// Fields of every snapshot of `wave`. The phase is unwrapped from the
    /// point of maximum initial density, pinned to its principal value there
    /// at the first snapshot and kept continuous in time afterwards.
    /// `rho_min` defaults to `1e-12` of the initial peak density.
    pub fn from_wave_series(wave: &WaveSeries, rho_min: Option<f64>, rho_ref: f64) -> Result<Self> {
        let first = &wave.snapshots[0];
        let rho0 = first.density();
        let peak = rho0.iter().cloned().fold(0.0, f64::max);
        let rho_min = rho_min.unwrap_or(DEFAULT_RHO_MIN_RATIO * peak);
        let anchor = argmax(&rho0);
        let mut snapshots = wave
            .snapshots
            .par_iter()
            .map(|w| derive_fields_anchored(w, &wave.params, rho_min, rho_ref, anchor))
            .collect::<Result<Vec<_>>>()?;
        let two_pi_hbar = 2.0 * std::f64::consts::PI * wave.params.hbar;
        for k in 1..snapshots.len() {
            let prev = snapshots[k - 1].s[anchor];
            let predicted = if k >= 2 {
                2.0 * prev - snapshots[k - 2].s[anchor]
            } else {
                prev
            };
            let shift = ((predicted - snapshots[k].s[anchor]) / two_pi_hbar).round() * two_pi_hbar;
            if shift != 0.0 {
                let snap = &mut snapshots[k];
                for arr in [&mut snap.s, &mut snap.s_plus, &mut snap.s_minus] {
                    for v in arr.iter_mut() {
                        *v += shift;
                    }
                }
            }
        }
        Ok(Self {
            params: wave.params.clone(),
            time_base: wave.time_base,
            rho_ref,
            rho_min,
            snapshots,
        })
    }
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
        .0
}

/// Fields of one snapshot, unwrapping the phase from its density maximum.
pub fn derive_fields(
    wave: &WaveSnapshot,
    params: &PhysicalParams,
    rho_min: f64,
    rho_ref: f64,
) -> Result<FieldSnapshot> {
    let anchor = argmax(&wave.density());
    derive_fields_anchored(wave, params, rho_min, rho_ref, anchor)
}

/// Fields of one snapshot with the phase unwrapped outward from `anchor`,
/// where it takes its principal value. If `anchor` is masked the nearest
/// valid point is used.
pub fn derive_fields_anchored(
    wave: &WaveSnapshot,
    params: &PhysicalParams,
    rho_min: f64,
    rho_ref: f64,
    anchor: usize,
) -> Result<FieldSnapshot> {
    if !(rho_ref > 0.0) {
        return Err(Error::precondition(
            MODULE,
            format!("rho_ref must be > 0 (got {rho_ref})"),
        ));
    }
    let grid = wave.grid;
    let n = wave.values.len();
    let (hbar, m) = (params.hbar, params.mass);
    let h = grid.spacing();
    let rho = wave.density();
    let mut valid: Vec<bool> = rho.iter().map(|&r| r >= rho_min && r > 0.0).collect();
    if !valid.iter().any(|&v| v) {
        return Err(Error::DegenerateState { rho_min });
    }
    let anchor = nearest_valid(&valid, anchor);
    let phase = unwrap_phase(wave, &valid, anchor)?;

    let nan = || vec![f64::NAN; n];
    let mut s = nan();
    let mut s_plus = nan();
    let mut s_minus = nan();
    for i in 0..n {
        if valid[i] {
            s[i] = hbar * phase[i];
            let log = 0.5 * hbar * (rho[i] / rho_ref).ln();
            s_plus[i] = s[i] + log;
            s_minus[i] = s[i] - log;
        }
    }
    let (ds_plus, dds_plus) = masked_derivatives(&s_plus, &valid, h);
    let (ds_minus, dds_minus) = masked_derivatives(&s_minus, &valid, h);
    for i in 0..n {
        if valid[i] && ds_plus[i].is_nan() {
            valid[i] = false;
        }
    }
    let mut v = nan();
    let mut v_plus = nan();
    let mut v_minus = nan();
    let mut u = nan();
    let mut q = nan();
    let mut q_plus = nan();
    let mut q_minus = nan();
    for i in 0..n {
        if !valid[i] {
            s[i] = f64::NAN;
            s_plus[i] = f64::NAN;
            s_minus[i] = f64::NAN;
            continue;
        }
        v_plus[i] = ds_plus[i] / m;
        v_minus[i] = ds_minus[i] / m;
        v[i] = 0.5 * (v_plus[i] + v_minus[i]);
        u[i] = v_plus[i] - v_minus[i];
        let grad_diff = ds_plus[i] - ds_minus[i];
        let coupling = grad_diff * grad_diff / (4.0 * m);
        q_plus[i] = hbar / (2.0 * m) * dds_minus[i] - coupling;
        q_minus[i] = -hbar / (2.0 * m) * dds_plus[i] - coupling;
        // −(ħ²/2m)∂²√ρ/√ρ written through ln ρ = (S₊ − S₋)/ħ
        let dd_log = (dds_plus[i] - dds_minus[i]) / hbar;
        let d_log = grad_diff / hbar;
        q[i] = -hbar * hbar / (4.0 * m) * (dd_log + 0.5 * d_log * d_log);
    }
    Ok(FieldSnapshot {
        grid,
        time: wave.time,
        rho,
        s,
        s_plus,
        s_minus,
        v,
        v_plus,
        v_minus,
        u,
        q,
        q_plus,
        q_minus,
        valid,
    })
}

fn nearest_valid(valid: &[bool], i: usize) -> usize {
    (0..valid.len())
        .filter(|&j| valid[j])
        .min_by_key(|&j| j.abs_diff(i))
        .expect("at least one valid point")
}

/// Phase (radians) on valid points, continued outward from `anchor` along
/// the linear prediction of the two previous valid points.
fn unwrap_phase(wave: &WaveSnapshot, valid: &[bool], anchor: usize) -> Result<Vec<f64>> {
    use std::f64::consts::{PI, TAU};
    let n = valid.len();
    let mut phase = vec![f64::NAN; n];
    phase[anchor] = wave.values[anchor].arg();
    let grid = wave.grid;
    for dir in [1isize, -1] {
        let mut prev: Option<usize> = Some(anchor);
        let mut prev2: Option<usize> = None;
        let mut i = anchor as isize + dir;
        while i >= 0 && (i as usize) < n {
            let iu = i as usize;
            i += dir;
            if !valid[iu] {
                continue;
            }
            let p = prev.expect("anchor is valid");
            let raw = wave.values[iu].arg();
            let predicted = match prev2 {
                Some(p2) => {
                    let slope = (phase[p] - phase[p2]) / (p as f64 - p2 as f64);
                    phase[p] + slope * (iu as f64 - p as f64)
                }
                None => phase[p],
            };
            let value = raw + ((predicted - raw) / TAU).round() * TAU;
            let jump = value - phase[p];
            if jump.abs() > PI {
                let (a, b) = if dir > 0 { (p, iu) } else { (iu, p) };
                return Err(Error::UnwrapFailure {
                    x_left: grid.x(a),
                    x_right: grid.x(b),
                    jump,
                });
            }
            phase[iu] = value;
            prev2 = Some(p);
            prev = Some(iu);
        }
    }
    Ok(phase)
}

/// Sign convention for the first term of `Q±`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QSign {
    /// `±(ħ/2m)∂²S∓`.
    Derived,
    /// `∓(ħ/2m)∂²S∓`.
    Printed,
}

/// Residual values on one interior snapshot; NaN where undefined.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualField {
    pub time: f64,
    pub values: Vec<f64>,
}

impl ResidualField {
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| !v.is_nan())
            .fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `(Σ r² Δx)^(1/2)` over defined points.
    pub fn l2(&self, dx: f64) -> f64 {
        (self
            .values
            .iter()
            .filter(|v| !v.is_nan())
            .map(|v| v * v)
            .sum::<f64>()
            * dx)
            .sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct ResidualPair {
    pub dx: f64,
    pub plus: Vec<ResidualField>,
    pub minus: Vec<ResidualField>,
}

impl ResidualPair {
    pub fn max_abs(&self) -> f64 {
        self.plus
            .iter()
            .chain(&self.minus)
            .fold(0.0, |a, r| a.max(r.max_abs()))
    }

    /// Largest per-snapshot L2 norm over both branches.
    pub fn l2(&self) -> f64 {
        self.plus
            .iter()
            .chain(&self.minus)
            .fold(0.0, |a, r| a.max(r.l2(self.dx)))
    }
}

fn require_three(series: &FieldSeries) -> Result<()> {
    if series.snapshots.len() < 3 {
        return Err(Error::precondition(
            MODULE,
            format!(
                "residuals need at least 3 snapshots for centered time differences (got {})",
                series.snapshots.len()
            ),
        ));
    }
    Ok(())
}

/// Applies `f(prev, cur, next, i)` at points valid in all three snapshots.
fn centered_in_time<F>(series: &FieldSeries, f: F) -> Vec<ResidualField>
where
    F: Fn(&FieldSnapshot, &FieldSnapshot, &FieldSnapshot, usize) -> f64 + Sync,
{
    let snaps = &series.snapshots;
    (1..snaps.len() - 1)
        .into_par_iter()
        .map(|k| {
            let (a, b, c) = (&snaps[k - 1], &snaps[k], &snaps[k + 1]);
            let values = (0..b.len())
                .map(|i| {
                    if a.valid[i] && b.valid[i] && c.valid[i] {
                        f(a, b, c, i)
                    } else {
                        f64::NAN
                    }
                })
                .collect();
            ResidualField {
                time: b.time,
                values,
            }
        })
        .collect()
}

/// `∂S±/∂t + (∂S±)²/2m + Q± + V`, with `∂/∂t` centered on stored snapshots.
pub fn hj_residuals(series: &FieldSeries, sign: QSign) -> Result<ResidualPair> {
    require_three(series)?;
    let params = &series.params;
    let (hbar, m) = (params.hbar, params.mass);
    let grid = series.grid();
    let dt2 = 2.0 * series.time_base.step;
    let potential: Vec<f64> = grid.points().map(|x| params.potential_at(x)).collect();
    // the printed variant differs by ∓(ħ/m)∂²S∓
    let flip = |snap: &FieldSnapshot| -> (Vec<f64>, Vec<f64>) {
        match sign {
            QSign::Derived => (vec![0.0; snap.len()], vec![0.0; snap.len()]),
            QSign::Printed => {
                let (_, dd_minus) = masked_derivatives(&snap.s_minus, &snap.valid, grid.spacing());
                let (_, dd_plus) = masked_derivatives(&snap.s_plus, &snap.valid, grid.spacing());
                (
                    dd_minus.iter().map(|d| -hbar / m * d).collect(),
                    dd_plus.iter().map(|d| hbar / m * d).collect(),
                )
            }
        }
    };
    let corrections: Vec<(Vec<f64>, Vec<f64>)> = series.snapshots.par_iter().map(flip).collect();
    let index_of = |snap: &FieldSnapshot| series.time_base.index_of(snap.time).unwrap_or(0);
    let plus = centered_in_time(series, |a, b, c, i| {
        let k = index_of(b);
        (c.s_plus[i] - a.s_plus[i]) / dt2
            + 0.5 * m * b.v_plus[i] * b.v_plus[i]
            + b.q_plus[i]
            + corrections[k].0[i]
            + potential[i]
    });
    let minus = centered_in_time(series, |a, b, c, i| {
        let k = index_of(b);
        (c.s_minus[i] - a.s_minus[i]) / dt2
            + 0.5 * m * b.v_minus[i] * b.v_minus[i]
            + b.q_minus[i]
            + corrections[k].1[i]
            + potential[i]
    });
    Ok(ResidualPair {
        dx: grid.spacing(),
        plus,
        minus,
    })
}

/// `∂ρ/∂t + ∂(ρv±) ∓ (ħ/2m)∂²ρ`.
pub fn fokker_planck_residuals(series: &FieldSeries) -> Result<ResidualPair> {
    require_three(series)?;
    let (hbar, m) = (series.params.hbar, series.params.mass);
    let h = series.grid().spacing();
    let dt2 = 2.0 * series.time_base.step;
    let spatial: Vec<[Vec<f64>; 3]> = series
        .snapshots
        .par_iter()
        .map(|snap| {
            let rho: Vec<f64> = (0..snap.len())
                .map(|i| if snap.valid[i] { snap.rho[i] } else { f64::NAN })
                .collect();
            let flux_plus: Vec<f64> = rho.iter().zip(&snap.v_plus).map(|(r, v)| r * v).collect();
            let flux_minus: Vec<f64> = rho.iter().zip(&snap.v_minus).map(|(r, v)| r * v).collect();
            let (_, dd_rho) = masked_derivatives(&rho, &snap.valid, h);
            let (d_plus, _) = masked_derivatives(&flux_plus, &snap.valid, h);
            let (d_minus, _) = masked_derivatives(&flux_minus, &snap.valid, h);
            [d_plus, d_minus, dd_rho]
        })
        .collect();
    let diffusion = hbar / (2.0 * m);
    let index_of = |snap: &FieldSnapshot| series.time_base.index_of(snap.time).unwrap_or(0);
    let plus = centered_in_time(series, |a, b, c, i| {
        let [dp, _, ddr] = &spatial[index_of(b)];
        (c.rho[i] - a.rho[i]) / dt2 + dp[i] - diffusion * ddr[i]
    });
    let minus = centered_in_time(series, |a, b, c, i| {
        let [_, dm, ddr] = &spatial[index_of(b)];
        (c.rho[i] - a.rho[i]) / dt2 + dm[i] + diffusion * ddr[i]
    });
    Ok(ResidualPair { dx: h, plus, minus })
}

/// Residuals of the polar pair: `∂S/∂t + (∂S)²/2m + Q + V` and
/// `(∂ρ/∂t + ∂(ρv))/ρ`.
#[derive(Clone, Debug)]
pub struct PolarResiduals {
    pub dx: f64,
    pub hamilton_jacobi: Vec<ResidualField>,
    pub continuity: Vec<ResidualField>,
}

pub fn polar_residuals(series: &FieldSeries) -> Result<PolarResiduals> {
    require_three(series)?;
    let params = &series.params;
    let m = params.mass;
    let grid = series.grid();
    let h = grid.spacing();
    let dt2 = 2.0 * series.time_base.step;
    let potential: Vec<f64> = grid.points().map(|x| params.potential_at(x)).collect();
    let flux_div: Vec<Vec<f64>> = series
        .snapshots
        .par_iter()
        .map(|snap| {
            let flux: Vec<f64> = (0..snap.len()).map(|i| snap.rho[i] * snap.v[i]).collect();
            masked_derivatives(&flux, &snap.valid, h).0
        })
        .collect();
    let index_of = |snap: &FieldSnapshot| series.time_base.index_of(snap.time).unwrap_or(0);
    let hamilton_jacobi = centered_in_time(series, |a, b, c, i| {
        (c.s[i] - a.s[i]) / dt2 + 0.5 * m * b.v[i] * b.v[i] + b.q[i] + potential[i]
    });
    let continuity = centered_in_time(series, |a, b, c, i| {
        ((c.rho[i] - a.rho[i]) / dt2 + flux_div[index_of(b)][i]) / b.rho[i]
    });
    Ok(PolarResiduals {
        dx: h,
        hamilton_jacobi,
        continuity,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryPoints {
    pub points: Vec<f64>,
    /// `v₊ = v₋` everywhere: no isolated points exist.
    pub degenerate: bool,
}

/// Points where `v₊ = v₋`, i.e. zeros of `u`, bracketed by sign changes
/// between adjacent valid points and located by linear interpolation.
pub fn stationary_points(snapshot: &FieldSnapshot, params: &PhysicalParams) -> StationaryPoints {
    let grid = snapshot.grid;
    let idx: Vec<usize> = snapshot.valid_indices().collect();
    let u_scale = params.hbar / (params.mass * grid.width());
    let max_u = idx.iter().fold(0.0f64, |a, &i| a.max(snapshot.u[i].abs()));
    if idx.is_empty() || max_u <= 1e-9 * u_scale {
        return StationaryPoints {
            points: Vec::new(),
            degenerate: !idx.is_empty(),
        };
    }
    let mut points = Vec::new();
    for w in idx.windows(2) {
        let (i, j) = (w[0], w[1]);
        if j != i + 1 {
            continue;
        }
        let (a, b) = (snapshot.u[i], snapshot.u[j]);
        if a == 0.0 {
            points.push(grid.x(i));
        } else if a * b < 0.0 {
            let (xa, xb) = (grid.x(i), grid.x(j));
            points.push(xa + (xb - xa) * a / (a - b));
        }
    }
    if let Some(&last) = idx.last() {
        if snapshot.u[last] == 0.0 {
            points.push(grid.x(last));
        }
    }
    StationaryPoints {
        points,
        degenerate: false,
    }
}

/// Largest violations of the exchange relations `S'± = −S∓`, `v'± = −v∓`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExchangeReport {
    pub max_action: f64,
    pub max_velocity: f64,
    pub compared_points: usize,
}

/// Compares a series started from `ψ*(x, 0)` and run forward with the
/// original state run backward over the same elapsed times. Under
/// conjugation `ψ'(x, s) = ψ*(x, −s)`, so the primed fields at elapsed time
/// `s` are matched against the original fields at `−s`.
pub fn time_reversal_check(
    backward: &FieldSeries,
    conjugate: &FieldSeries,
) -> Result<ExchangeReport> {
    let (tb, tc) = (backward.time_base, conjugate.time_base);
    if backward.grid() != conjugate.grid()
        || tb.steps != tc.steps
        || (tb.start - tc.start).abs() > 1e-12
        || (tb.step + tc.step).abs() > 1e-12 * tc.step.abs()
    {
        return Err(Error::precondition(
            MODULE,
            "time reversal check needs equal grids and mirrored time bases (same start, opposite steps)",
        ));
    }
    let mut report = ExchangeReport {
        max_action: 0.0,
        max_velocity: 0.0,
        compared_points: 0,
    };
    for (b, c) in backward.snapshots.iter().zip(&conjugate.snapshots) {
        for i in 0..b.len() {
            if !(b.valid[i] && c.valid[i]) {
                continue;
            }
            report.compared_points += 1;
            let ds = (c.s_plus[i] + b.s_minus[i])
                .abs()
                .max((c.s_minus[i] + b.s_plus[i]).abs());
            let dv = (c.v_plus[i] + b.v_minus[i])
                .abs()
                .max((c.v_minus[i] + b.v_plus[i]).abs());
            report.max_action = report.max_action.max(ds);
            report.max_velocity = report.max_velocity.max(dv);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::GaussianParams;
    use crate::reference::{analytic_series, InitialStateSpec};
    use num_complex::Complex64;

    fn unit_spec() -> InitialStateSpec {
        InitialStateSpec::gaussian_at_rest(0.5f64.sqrt())
    }

    fn analytic(grid: SpatialGrid, times: TimeBase) -> FieldSeries {
        let p = PhysicalParams::natural();
        let w = analytic_series(&unit_spec(), &grid, &p, times).unwrap();
        FieldSeries::from_wave_series(&w, None, 1.0).unwrap()
    }

    /// Grid with nodes at 0 and ±1.
    fn odd_grid() -> SpatialGrid {
        SpatialGrid::new(-10.0, 10.0, 2001).unwrap()
    }

    #[test]
    fn gaussian_fields_at_unit_point() {
        let s = analytic(odd_grid(), TimeBase::from_zero(0.1, 0));
        let snap = &s.snapshots[0];
        let i = 1100; // x = 1
        assert!((snap.grid.x(i) - 1.0).abs() < 1e-12);
        assert!((snap.v_plus[i] + 1.0).abs() < 1e-10);
        assert!((snap.v_minus[i] - 1.0).abs() < 1e-10);
        assert!((snap.u[i] + 2.0).abs() < 1e-10);
        assert!((snap.q_plus[i] + 0.5).abs() < 1e-9);
        assert!((snap.q_minus[i] + 0.5).abs() < 1e-9);
        assert!(snap.q[i].abs() < 1e-4);
        let o = 1000;
        assert!(snap.v_plus[o].abs() < 1e-12 && snap.v_minus[o].abs() < 1e-12);
        for f in [snap.q_plus[o], snap.q_minus[o]] {
            assert!((f - 0.5).abs() < 1e-9);
        }
        assert!((snap.q[o] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn construction_identities() {
        let grid = SpatialGrid::new(-10.0, 10.0, 1024).unwrap();
        let p = PhysicalParams::natural();
        let w = analytic_series(&unit_spec(), &grid, &p, TimeBase::from_zero(0.7, 1)).unwrap();
        let s = FieldSeries::from_wave_series(&w, None, 1.0).unwrap();
        for (snap, wave) in s.snapshots.iter().zip(&w.snapshots) {
            assert!(snap.valid_count() > 500);
            for i in snap.valid_indices() {
                let log = 0.5 * (snap.rho[i]).ln();
                assert!((snap.s_plus[i] - snap.s[i] - log).abs() <= 1e-10 * (1.0 + log.abs()));
                let back = (snap.s_plus[i] - snap.s_minus[i]).exp();
                assert!((back - snap.rho[i]).abs() <= 1e-10 * snap.rho[i]);
                assert!((snap.v[i] - 0.5 * (snap.v_plus[i] + snap.v_minus[i])).abs() < 1e-12);
                assert!((snap.u[i] - (snap.v_plus[i] - snap.v_minus[i])).abs() < 1e-12);
                let psi = Complex64::from_polar(snap.rho[i].sqrt(), snap.s[i]);
                assert!((psi - wave.values[i]).norm() <= 1e-10 * wave.values[i].norm());
            }
        }
    }

    #[test]
    fn phase_matches_closed_form_without_offset() {
        let g = GaussianParams::unit();
        let s = analytic(odd_grid(), TimeBase::from_zero(0.25, 8));
        for snap in &s.snapshots {
            for i in snap.valid_indices().step_by(37) {
                let x = snap.grid.x(i);
                let exact = g.fields(x, snap.time).s;
                assert!((snap.s[i] - exact).abs() < 1e-9, "t={} x={x}", snap.time);
            }
        }
    }

    #[test]
    fn degenerate_state() {
        let grid = SpatialGrid::new(-1.0, 1.0, 32).unwrap();
        let wave = WaveSnapshot {
            grid,
            time: 0.0,
            values: vec![Complex64::new(1e-9, 0.0); 32],
        };
        assert!(matches!(
            derive_fields(&wave, &PhysicalParams::natural(), 1e-6, 1.0),
            Err(Error::DegenerateState { .. })
        ));
    }

    #[test]
    fn coarse_grid_fails_to_unwrap() {
        // plane wave with k·Δx beyond π between some neighbours: the chirp
        // accelerates until the predicted continuation jumps by more than π
        let grid = SpatialGrid::new(0.0, 10.0, 64).unwrap();
        let values = grid
            .points()
            .map(|x| Complex64::from_polar(1.0, 2.0 * x * x))
            .collect();
        let wave = WaveSnapshot {
            grid,
            time: 0.0,
            values,
        };
        assert!(matches!(
            derive_fields_anchored(&wave, &PhysicalParams::natural(), 1e-3, 1.0, 0),
            Err(Error::UnwrapFailure { .. })
        ));
    }

    #[test]
    fn plane_wave_residual_vanishes() {
        let grid = SpatialGrid::new(-5.0, 5.0, 101).unwrap();
        let p = PhysicalParams::natural();
        let k = 0.7;
        let times = TimeBase::from_zero(0.01, 2);
        let snapshots: Vec<WaveSnapshot> = times
            .times()
            .map(|t| WaveSnapshot {
                grid,
                time: t,
                values: grid
                    .points()
                    .map(|x| Complex64::from_polar(0.3, k * x - 0.5 * k * k * t))
                    .collect(),
            })
            .collect();
        let wave = WaveSeries {
            params: p.clone(),
            grid,
            time_base: times,
            snapshots,
        };
        let s = FieldSeries::from_wave_series(&wave, None, 1.0).unwrap();
        let r = hj_residuals(&s, QSign::Derived).unwrap();
        assert!(r.max_abs() < 1e-11, "{}", r.max_abs());
        let fp = fokker_planck_residuals(&s).unwrap();
        assert!(fp.max_abs() < 1e-12);
        let st = stationary_points(&s.snapshots[1], &p);
        assert!(st.points.is_empty() && st.degenerate);
    }

    #[test]
    fn residuals_need_three_snapshots() {
        let s = analytic(
            SpatialGrid::new(-10.0, 10.0, 256).unwrap(),
            TimeBase::from_zero(0.1, 1),
        );
        assert!(matches!(
            hj_residuals(&s, QSign::Derived),
            Err(Error::Precondition { .. })
        ));
        assert!(matches!(
            fokker_planck_residuals(&s),
            Err(Error::Precondition { .. })
        ));
    }

    fn three_around(t: f64, grid: SpatialGrid, dt: f64) -> FieldSeries {
        analytic(grid, TimeBase::new(t - dt, dt, 2))
    }

    #[test]
    fn hj_residual_small_and_second_order() {
        let grid = SpatialGrid::new(-10.0, 10.0, 2048).unwrap();
        let coarse = hj_residuals(&three_around(0.5, grid, 1e-3), QSign::Derived).unwrap();
        assert!(coarse.l2() <= 1e-4, "{}", coarse.l2());
        let a = hj_residuals(&three_around(0.5, grid, 4e-2), QSign::Derived)
            .unwrap()
            .l2();
        let b = hj_residuals(&three_around(0.5, grid.refined(), 2e-2), QSign::Derived)
            .unwrap()
            .l2();
        let ratio = a / b;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn printed_sign_does_not_converge() {
        let grid = SpatialGrid::new(-10.0, 10.0, 2048).unwrap();
        let a = hj_residuals(&three_around(0.5, grid, 4e-2), QSign::Printed).unwrap();
        let b = hj_residuals(&three_around(0.5, grid.refined(), 2e-2), QSign::Printed).unwrap();
        assert!(b.l2() > 0.1 && a.l2() / b.l2() < 1.5);
    }

    #[test]
    fn averaging_identities() {
        let grid = SpatialGrid::new(-10.0, 10.0, 2048).unwrap();
        let s = three_around(0.8, grid, 1e-3);
        let hj = hj_residuals(&s, QSign::Derived).unwrap();
        let polar = polar_residuals(&s).unwrap();
        let snap = &s.snapshots[1];
        for i in snap.valid_indices() {
            if !(snap.rho[i] > 1e-6) {
                continue;
            }
            let (rp, rm) = (hj.plus[0].values[i], hj.minus[0].values[i]);
            if rp.is_nan() {
                continue;
            }
            let avg = 0.5 * (rp + rm);
            assert!((avg - polar.hamilton_jacobi[0].values[i]).abs() < 1e-10);
            if snap.rho[i] > 1e-3 * 0.4 {
                assert!(((rp - rm) - polar.continuity[0].values[i]).abs() < 5e-3);
            }
        }
    }

    #[test]
    fn stationary_point_of_gaussian() {
        let s = analytic(
            SpatialGrid::new(-10.0, 10.0, 2048).unwrap(),
            TimeBase::from_zero(0.5, 2),
        );
        for snap in &s.snapshots {
            let st = stationary_points(snap, &s.params);
            assert_eq!(st.points.len(), 1);
            assert!(st.points[0].abs() <= snap.grid.spacing());
        }
    }
}
