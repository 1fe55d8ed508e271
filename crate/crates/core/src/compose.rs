//! Integral curves of a sum of velocity fields built from the curves of one
//! summand, and the density bookkeeping of non-conserved flows.
//!
//! Given the congruence `q_A(q_A0, t)` of `v_A` and a second field `v_B`,
//! the label-space field `V_B = (∂q_A/∂q_A0)⁻¹ v_B(q_A)` generates label
//! curves `Q_B(q_C0, t)`; then `q_C = q_A(Q_B, t)` are integral curves of
//! `v_A + v_B` through `q_C0`, with `J_C = J_A(Q_B) J_B`.
//!
//! Along a flow `v_A` that differs from the conserved flow by `v_B`, the
//! density splits as `ρ(q_A) = ρ0/J_A + c_A` with
//! `c_A = −J_A⁻¹ ∂/∂q_A0 ∫ ρ(q_A) J_A V_B dt`.

use rayon::prelude::*;

use crate::congruence::{Congruence, LabelSet};
use crate::error::{Error, Result};
use crate::fd::LabelDerivative;
use crate::interp::{cubic_at, hermite, interval};
use crate::params::TimeBase;
use crate::sampler::FieldSampler;

const MODULE: &str = "compose";
/// Smallest `J_A` accepted by the pushforward.
pub const SINGULAR_JACOBIAN: f64 = 1e-10;

pub struct CompositionSetup<'a> {
    pub a: &'a Congruence,
    pub field_b: &'a dyn FieldSampler,
    pub labels_c: LabelSet,
}

/// `q_A`, `J_A`, `∂J_A/∂q_A0` and `q̇_A` at an arbitrary label of frame `k`.
#[derive(Clone, Copy, Debug)]
struct AState {
    q: f64,
    j: f64,
    dj: f64,
    qdot: f64,
}

fn a_state(a: &Congruence, k: usize, label: f64) -> AState {
    let labels = a.labels.labels();
    let i = interval(labels, label);
    let (q, _) = hermite(
        labels[i],
        labels[i + 1],
        a.positions[k][i],
        a.positions[k][i + 1],
        a.jacobians[k][i],
        a.jacobians[k][i + 1],
        label,
    );
    let (j, dj) = cubic_at(labels, &a.jacobians[k], label);
    let qdot = cubic_at(labels, &a.velocities[k], label).0;
    AState { q, j, dj, qdot }
}

/// `V_B` and `∂V_B/∂q_A0` at label `label`, frame `k` of A.
fn label_field(setup: &CompositionSetup<'_>, k: usize, label: f64) -> Result<(f64, f64)> {
    let a = setup.a;
    let t = a.time_base.time(k);
    let s = a_state(a, k, label);
    if !(s.j > SINGULAR_JACOBIAN) {
        return Err(Error::NearSingular {
            label,
            time: t,
            jacobian: s.j,
        });
    }
    let b = setup.field_b.sample(s.q, t)?;
    let v = b.value / s.j;
    let dv = b.gradient - b.value * s.dj / (s.j * s.j);
    Ok((v, dv))
}

/// `V_B(q_A0, t) = v_B(q_A(q_A0, t), t) / J_A(q_A0, t)` at a stored time.
pub fn pushforward_vector(setup: &CompositionSetup<'_>, q_a0: f64, t: f64) -> Result<f64> {
    let k = setup.a.frame(t)?;
    if !setup.a.labels.contains(q_a0) {
        return Err(Error::precondition(
            MODULE,
            format!("label {q_a0} outside A's label span"),
        ));
    }
    label_field(setup, k, q_a0).map(|(v, _)| v)
}

/// Composed curves on every other time of A.
#[derive(Clone, Debug)]
pub struct CompositionResult {
    pub labels: LabelSet,
    pub time_base: TimeBase,
    /// `Q_B(q_C0, t)`, `[time][label]`.
    pub label_curves: Vec<Vec<f64>>,
    pub paths: Vec<Vec<f64>>,
    /// `(v_A + v_B)(q_C, t)`.
    pub velocities: Vec<Vec<f64>>,
    pub jacobian_a: Vec<Vec<f64>>,
    pub jacobian_b: Vec<Vec<f64>>,
    pub jacobian_c: Vec<Vec<f64>>,
    /// `|q̇_C − (v_A + v_B)(q_C)|` with `q̇_C` from time differences of the
    /// stored paths.
    pub residuals: Vec<Vec<f64>>,
}

impl CompositionResult {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().flatten().fold(0.0, |a, &r| a.max(r))
    }

    pub fn velocity_scale(&self) -> f64 {
        self.velocities
            .iter()
            .flatten()
            .fold(0.0, |a, &v| a.max(v.abs()))
    }

    /// Largest relative gap between `J_C = J_A(Q_B) J_B` and the label finite
    /// difference of `q_C` on interior labels.
    pub fn jacobian_factorization_gap(&self) -> f64 {
        let d = LabelDerivative::new(self.labels.labels());
        let n = self.labels.len();
        let mut worst = 0.0f64;
        for (p, j) in self.paths.iter().zip(&self.jacobian_c) {
            let fd = d.apply(p);
            for i in 2..n - 2 {
                worst = worst.max((fd[i] - j[i]).abs() / j[i].abs());
            }
        }
        worst
    }

    /// The composed curves as a congruence (actions zero).
    pub fn to_congruence(&self) -> Congruence {
        Congruence {
            labels: self.labels.clone(),
            time_base: self.time_base,
            positions: self.paths.clone(),
            velocities: self.velocities.clone(),
            jacobians: self.jacobian_c.clone(),
            actions: vec![vec![0.0; self.labels.len()]; self.time_base.len()],
        }
    }
}

/// Integrates `dQ_B/dt = V_B(Q_B, t)` (and `J_B`) with RK4 of step `2Δt_A`,
/// so every stage lands on a stored time of A, then maps through `q_A`.
pub fn compose_trajectories(setup: &CompositionSetup<'_>) -> Result<CompositionResult> {
    let a = setup.a;
    let tb = a.time_base;
    if tb.steps < 4 || tb.steps % 2 != 0 {
        return Err(Error::precondition(
            MODULE,
            format!(
                "A needs an even number (>= 4) of stored steps (got {})",
                tb.steps
            ),
        ));
    }
    let (lo, hi) = a.labels.span();
    for &q in setup.labels_c.labels() {
        if q < lo || q > hi {
            return Err(Error::precondition(
                MODULE,
                format!("label {q} of C lies outside A's label span [{lo}, {hi}]"),
            ));
        }
    }
    let out_tb = tb.strided(2);
    let frames = out_tb.len();
    let h = out_tb.step;
    let eval = |label: f64, k: usize, q0: f64| -> Result<(f64, f64)> {
        if !(label >= lo && label <= hi) {
            return Err(Error::SpanExhausted {
                label: q0,
                time: tb.time(k),
                reached: label,
                lo,
                hi,
            });
        }
        label_field(setup, k, label)
    };
    let tracks = setup
        .labels_c
        .labels()
        .par_iter()
        .map(|&q0| -> Result<Vec<(f64, f64)>> {
            let mut out = Vec::with_capacity(frames);
            let (mut q, mut jb) = (q0, 1.0);
            out.push((q, jb));
            for n in 0..frames - 1 {
                let k = 2 * n;
                let (v1, d1) = eval(q, k, q0)?;
                let (v2, d2) = eval(q + 0.5 * h * v1, k + 1, q0)?;
                let j2 = jb + 0.5 * h * d1 * jb;
                let (v3, d3) = eval(q + 0.5 * h * v2, k + 1, q0)?;
                let j3 = jb + 0.5 * h * d2 * j2;
                let (v4, d4) = eval(q + h * v3, k + 2, q0)?;
                let j4 = jb + h * d3 * j3;
                q += h / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
                jb += h / 6.0 * (d1 * jb + 2.0 * d2 * j2 + 2.0 * d3 * j3 + d4 * j4);
                if !(q >= lo && q <= hi) {
                    return Err(Error::SpanExhausted {
                        label: q0,
                        time: out_tb.time(n + 1),
                        reached: q,
                        lo,
                        hi,
                    });
                }
                out.push((q, jb));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = setup.labels_c.len();
    let mut r = CompositionResult {
        labels: setup.labels_c.clone(),
        time_base: out_tb,
        label_curves: vec![vec![0.0; n]; frames],
        paths: vec![vec![0.0; n]; frames],
        velocities: vec![vec![0.0; n]; frames],
        jacobian_a: vec![vec![0.0; n]; frames],
        jacobian_b: vec![vec![0.0; n]; frames],
        jacobian_c: vec![vec![0.0; n]; frames],
        residuals: vec![vec![0.0; n]; frames],
    };
    for (i, track) in tracks.iter().enumerate() {
        for (f, &(q, jb)) in track.iter().enumerate() {
            let k = 2 * f;
            let s = a_state(a, k, q);
            let vb = setup.field_b.value(s.q, tb.time(k))?;
            r.label_curves[f][i] = q;
            r.paths[f][i] = s.q;
            r.velocities[f][i] = s.qdot + vb;
            r.jacobian_a[f][i] = s.j;
            r.jacobian_b[f][i] = jb;
            r.jacobian_c[f][i] = s.j * jb;
        }
    }
    for f in 0..frames {
        for i in 0..n {
            let p = |g: usize| r.paths[g][i];
            let qdot = if f == 0 {
                (-3.0 * p(0) + 4.0 * p(1) - p(2)) / (2.0 * h)
            } else if f == frames - 1 {
                (3.0 * p(f) - 4.0 * p(f - 1) + p(f - 2)) / (2.0 * h)
            } else {
                (p(f + 1) - p(f - 1)) / (2.0 * h)
            };
            r.residuals[f][i] = (qdot - r.velocities[f][i]).abs();
        }
    }
    Ok(r)
}

/// Source-term bookkeeping along a congruence `A` whose flow differs from
/// the conserved one by `v_B`.
#[derive(Clone, Debug)]
pub struct SourceTable {
    pub labels: LabelSet,
    pub time_base: TimeBase,
    /// `P_A = ρ(q_A, t)`.
    pub density: Vec<Vec<f64>>,
    /// `P_A J_A V_B`.
    pub integrand: Vec<Vec<f64>>,
    /// `c_A`.
    pub source: Vec<Vec<f64>>,
    /// `ρ0 J_A⁻¹ / P_A`.
    pub rho_ratio: Vec<Vec<f64>>,
}

impl SourceTable {
    /// Largest `|P_A − ρ0/J_A − c_A|` over labels away from the two edge
    /// labels on each side, relative to the peak of `P_A` in the same frame
    /// (far-tail densities are below any meaningful relative accuracy).
    pub fn decomposition_error(&self) -> f64 {
        let n = self.labels.len();
        let mut worst = 0.0f64;
        for k in 0..self.time_base.len() {
            let peak = self.density[k].iter().fold(0.0f64, |a, &p| a.max(p));
            for i in 2..n - 2 {
                let p = self.density[k][i];
                let traj = p * self.rho_ratio[k][i];
                worst = worst.max((p - traj - self.source[k][i]).abs() / peak);
            }
        }
        worst
    }

    /// `c_A` at an arbitrary label of frame `k`.
    pub fn source_at(&self, k: usize, q0: f64) -> f64 {
        cubic_at(self.labels.labels(), &self.source[k], q0).0
    }
}

/// Builds the source table of `a` with trapezoidal time quadrature on A's
/// stored steps and the label derivative taken after the quadrature.
pub fn source_term(
    a: &Congruence,
    rho: &dyn FieldSampler,
    rho0: impl Fn(f64) -> f64,
    field_b: &dyn FieldSampler,
) -> Result<SourceTable> {
    let tb = a.time_base;
    let n = a.labels.len();
    let frames = tb.len();
    let rows = (0..frames)
        .into_par_iter()
        .map(|k| -> Result<(Vec<f64>, Vec<f64>)> {
            let t = tb.time(k);
            let mut dens = Vec::with_capacity(n);
            let mut integrand = Vec::with_capacity(n);
            for i in 0..n {
                let q = a.positions[k][i];
                let p = rho.value(q, t)?;
                let vb = field_b.value(q, t)?;
                dens.push(p);
                // J_A V_B = v_B
                integrand.push(p * vb);
            }
            Ok((dens, integrand))
        })
        .collect::<Result<Vec<_>>>()?;
    let (density, integrand): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let d = LabelDerivative::new(a.labels.labels());
    let mut accumulated = vec![0.0; n];
    let mut source = Vec::with_capacity(frames);
    let mut rho_ratio = Vec::with_capacity(frames);
    for k in 0..frames {
        if k > 0 {
            for i in 0..n {
                accumulated[i] += 0.5 * tb.step * (integrand[k - 1][i] + integrand[k][i]);
            }
        }
        let grad = d.apply(&accumulated);
        source.push(
            grad.iter()
                .zip(&a.jacobians[k])
                .map(|(g, j)| if k == 0 { 0.0 } else { -g / j })
                .collect::<Vec<f64>>(),
        );
        rho_ratio.push(
            (0..n)
                .map(|i| rho0(a.labels.labels()[i]) / a.jacobians[k][i] / density[k][i])
                .collect::<Vec<f64>>(),
        );
    }
    Ok(SourceTable {
        labels: a.labels.clone(),
        time_base: tb,
        density,
        integrand,
        source,
        rho_ratio,
    })
}

/// Per-label drift of `P_C J_C` relative to its initial value.
#[derive(Clone, Debug)]
pub struct ConservationReport {
    /// `P_C J_C / ρ0(q_C0)` per `[time][label]`.
    pub ratios: Vec<Vec<f64>>,
    pub max_drift: f64,
}

pub fn conservation_check(
    result: &CompositionResult,
    rho: &dyn FieldSampler,
) -> Result<ConservationReport> {
    let frames = result.time_base.len();
    let mut ratios = Vec::with_capacity(frames);
    let mut initial = Vec::new();
    let mut max_drift = 0.0f64;
    for k in 0..frames {
        let t = result.time_base.time(k);
        let mut row = Vec::with_capacity(result.labels.len());
        for i in 0..result.labels.len() {
            let pj = rho.value(result.paths[k][i], t)? * result.jacobian_c[k][i];
            if k == 0 {
                initial.push(pj);
            }
            let ratio = pj / initial[i];
            max_drift = max_drift.max((ratio - 1.0).abs());
            row.push(ratio);
        }
        ratios.push(row);
    }
    Ok(ConservationReport { ratios, max_drift })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureProbe {
    pub x: f64,
    pub rho: f64,
    /// `[r ρ0/J₊ + (1−r) ρ0/J₋] / ρ`.
    pub trajectory_ratio: f64,
    /// Same with `r c₊ + (1−r) c₋` added.
    pub restored_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct MixtureReport {
    pub weight: f64,
    pub probes: Vec<MixtureProbe>,
}

impl MixtureReport {
    pub fn max_restored_deviation(&self) -> f64 {
        self.probes
            .iter()
            .fold(0.0, |a, p| a.max((p.restored_ratio - 1.0).abs()))
    }
}

/// Weighted trajectory densities of the two congruences against `ρ`, with
/// and without their source terms.
#[allow(clippy::too_many_arguments)]
pub fn mixture_check(
    plus: &Congruence,
    minus: &Congruence,
    plus_sources: &SourceTable,
    minus_sources: &SourceTable,
    rho: &dyn FieldSampler,
    rho0: impl Fn(f64) -> f64,
    weight: f64,
    probes: &[f64],
    t: f64,
) -> Result<MixtureReport> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::precondition(
            MODULE,
            format!("weight must lie in [0, 1] (got {weight})"),
        ));
    }
    let kp = plus.frame(t)?;
    let km = minus.frame(t)?;
    let mp = plus.position_map(kp)?;
    let mm = minus.position_map(km)?;
    let probes = probes
        .iter()
        .map(|&x| -> Result<MixtureProbe> {
            let qp = plus.invert_at_frame(&mp, x, kp)?;
            let qm = minus.invert_at_frame(&mm, x, km)?;
            let tp = rho0(qp) / plus.at_label(&plus.jacobians[kp], qp);
            let tm = rho0(qm) / minus.at_label(&minus.jacobians[km], qm);
            let cp = plus_sources.source_at(kp, qp);
            let cm = minus_sources.source_at(km, qm);
            let r = rho.value(x, t)?;
            let mix = weight * tp + (1.0 - weight) * tm;
            Ok(MixtureProbe {
                x,
                rho: r,
                trajectory_ratio: mix / r,
                restored_ratio: (mix + weight * cp + (1.0 - weight) * cm) / r,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MixtureReport { weight, probes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congruence::integrate_congruence;
    use crate::oracle::{CompositionCase, GaussianParams, OracleField, PathKind};
    use crate::sampler::Zero;
    use std::f64::consts::FRAC_PI_4;

    fn g() -> GaussianParams {
        GaussianParams::unit()
    }

    fn congruence(
        field: crate::oracle::AnalyticField,
        lo: f64,
        hi: f64,
        count: usize,
    ) -> Congruence {
        integrate_congruence(
            &field,
            &LabelSet::uniform(lo, hi, count).unwrap(),
            TimeBase::from_zero(1e-3, 1000),
            None,
        )
        .unwrap()
    }

    fn value_at(r: &CompositionResult, rows: &[Vec<f64>], q0: f64, t: f64) -> f64 {
        let k = r.time_base.index_of(t).unwrap();
        let i = r
            .labels
            .labels()
            .iter()
            .position(|&l| (l - q0).abs() < 1e-12)
            .unwrap();
        rows[k][i]
    }

    #[test]
    fn case_i_label_generator_and_path() {
        let a = congruence(g().sampler(OracleField::VPlus), -4.0, 4.0, 161);
        let vb = g().sampler(OracleField::U).scaled(-0.5);
        let setup = CompositionSetup {
            a: &a,
            field_b: &vb,
            labels_c: LabelSet::uniform(-1.5, 1.5, 31).unwrap(),
        };
        // closed-form pushforward
        for t in [0.0, 0.5, 1.0] {
            let v = pushforward_vector(&setup, 0.8, t).unwrap();
            assert!((v - 0.8 / (1.0 + t * t)).abs() < 1e-9);
        }
        let r = compose_trajectories(&setup).unwrap();
        let qb = value_at(&r, &r.label_curves, 1.0, 1.0);
        assert!((qb - FRAC_PI_4.exp()).abs() < 1e-5, "{qb}");
        assert!((qb - g().label_generator(CompositionCase::I, 1.0, 1.0)).abs() < 1e-5);
        let qc = value_at(&r, &r.paths, 1.0, 1.0);
        assert!((qc - 2f64.sqrt()).abs() < 1e-5);
        assert!(r.max_residual() <= 1e-4 * r.velocity_scale());
        assert!(r.jacobian_factorization_gap() <= 1e-4);
        let cons = conservation_check(&r, &g().sampler(OracleField::Rho)).unwrap();
        assert!(cons.max_drift <= 1e-3);
    }

    #[test]
    fn zero_field_keeps_a() {
        let a = congruence(g().sampler(OracleField::VPlus), -2.0, 2.0, 41);
        let setup = CompositionSetup {
            a: &a,
            field_b: &Zero,
            labels_c: LabelSet::uniform(-1.0, 1.0, 11).unwrap(),
        };
        assert_eq!(pushforward_vector(&setup, 0.3, 0.5).unwrap(), 0.0);
        let r = compose_trajectories(&setup).unwrap();
        for k in 0..r.time_base.len() {
            assert_eq!(r.label_curves[k], r.labels.labels());
            for (i, &q0) in r.labels.labels().iter().enumerate() {
                let t = r.time_base.time(k);
                assert!((r.paths[k][i] - g().path(PathKind::Plus, q0, t)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn span_exhaustion_is_reported() {
        let a = congruence(g().sampler(OracleField::VPlus), -2.0, 2.0, 41);
        let vb = g().sampler(OracleField::U).scaled(-0.5);
        let setup = CompositionSetup {
            a: &a,
            field_b: &vb,
            labels_c: LabelSet::uniform(-1.8, 1.8, 11).unwrap(),
        };
        assert!(matches!(
            compose_trajectories(&setup),
            Err(Error::SpanExhausted { .. })
        ));
    }

    #[test]
    fn source_terms_and_mixture() {
        let rho0 = |x: f64| g().rho(x, 0.0);
        let rho = g().sampler(OracleField::Rho);
        let plus = congruence(g().sampler(OracleField::VPlus), -3.0, 3.0, 121);
        let minus = congruence(g().sampler(OracleField::VMinus), -3.0, 3.0, 121);
        let sp = source_term(&plus, &rho, rho0, &g().sampler(OracleField::U).scaled(-0.5)).unwrap();
        let sm = source_term(&minus, &rho, rho0, &g().sampler(OracleField::U).scaled(0.5)).unwrap();
        assert!(sp.source[0].iter().all(|&c| c == 0.0));
        assert!(sp.decomposition_error() <= 1e-3);
        assert!(sm.decomposition_error() <= 1e-3);
        let k = sp.time_base.len() - 1;
        let c = sp.source_at(k, 0.0);
        assert!(
            (c - g().rho(0.0, 1.0) * (1.0 - FRAC_PI_4.exp())).abs() < 1e-5,
            "{c}"
        );
        let mix =
            mixture_check(&plus, &minus, &sp, &sm, &rho, rho0, 0.5, &[0.0, 0.5], 1.0).unwrap();
        let cosh = FRAC_PI_4.cosh();
        assert!((mix.probes[0].trajectory_ratio - cosh).abs() < 1e-6);
        assert!(mix.max_restored_deviation() <= 1e-3);
    }

    #[test]
    fn dbb_without_source() {
        let rho0 = |x: f64| g().rho(x, 0.0);
        let dbb = congruence(g().sampler(OracleField::V), -3.0, 3.0, 61);
        let s = source_term(&dbb, &g().sampler(OracleField::Rho), rho0, &Zero).unwrap();
        assert!(s.source.iter().flatten().all(|&c| c == 0.0));
        assert!(s.decomposition_error() <= 1e-6);
    }
}
