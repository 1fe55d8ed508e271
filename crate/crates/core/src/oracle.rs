//! Closed forms for the free Gaussian packet at rest:
//!
//! ```text
//! ρ = (2πσ²)^(-1/2) exp(-x²/2σ²),   S = ħκt x²/4σ² − (ħ/2) atan κt,
//! σ = σ0 (1 + κ²t²)^(1/2),          κ = ħ / 2mσ0²,
//! ```
//!
//! together with every derived field, the de Broglie-Bohm and bi-HJ
//! trajectory families, and the label generators of the three composition
//! cases.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{FieldSampler, Sample};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub sigma0: f64,
    pub hbar: f64,
    pub mass: f64,
    /// Reference density inside `ln(ρ/ρ_ref)`.
    pub rho_ref: f64,
}

/// All Eulerian fields at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleFields {
    pub rho: f64,
    pub s: f64,
    pub s_plus: f64,
    pub s_minus: f64,
    pub v: f64,
    pub v_plus: f64,
    pub v_minus: f64,
    pub u: f64,
    pub q: f64,
    pub q_plus: f64,
    pub q_minus: f64,
}

/// Trajectory families with closed forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// Integral curves of `v = ∂S/m`.
    Dbb,
    Plus,
    Minus,
    /// Integral curves of `v₊/2`.
    HalfPlus,
}

/// Composition cases with closed-form label generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionCase {
    /// `v_A = v₊`, `v_B = −u/2`, composed flow de Broglie-Bohm.
    I,
    /// `v_A = v₊/2`, `v_B = v₋/2`, composed flow de Broglie-Bohm.
    Ii,
    /// `v_A = v`, `v_B = u/2`, composed flow `v₊`.
    Converse,
}

impl CompositionCase {
    pub fn id(self) -> &'static str {
        match self {
            CompositionCase::I => "i",
            CompositionCase::Ii => "ii",
            CompositionCase::Converse => "converse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "i" => Some(Self::I),
            "ii" => Some(Self::Ii),
            "converse" => Some(Self::Converse),
            _ => None,
        }
    }
}

/// Scalar fields the oracle can serve as a [`FieldSampler`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleField {
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
    /// `½mv² − Q` (free space).
    Lagrangian,
    LagrangianPlus,
    LagrangianMinus,
}

impl GaussianParams {
    pub fn new(sigma0: f64, hbar: f64, mass: f64) -> Result<Self> {
        if !(sigma0 > 0.0 && hbar > 0.0 && mass > 0.0) {
            return Err(Error::Config(vec![format!(
                "gaussian oracle needs sigma0, hbar, mass > 0 (got {sigma0}, {hbar}, {mass})"
            )]));
        }
        Ok(Self {
            sigma0,
            hbar,
            mass,
            rho_ref: 1.0,
        })
    }

    /// `ħ = m = 1`, `σ0² = 1/2`, hence `κ = 1`.
    pub fn unit() -> Self {
        Self {
            sigma0: 0.5f64.sqrt(),
            hbar: 1.0,
            mass: 1.0,
            rho_ref: 1.0,
        }
    }

    pub fn with_rho_ref(mut self, rho_ref: f64) -> Self {
        self.rho_ref = rho_ref;
        self
    }

    pub fn kappa(&self) -> f64 {
        self.hbar / (2.0 * self.mass * self.sigma0 * self.sigma0)
    }

    pub fn sigma2(&self, t: f64) -> f64 {
        let kt = self.kappa() * t;
        self.sigma0 * self.sigma0 * (1.0 + kt * kt)
    }

    pub fn sigma(&self, t: f64) -> f64 {
        self.sigma2(t).sqrt()
    }

    pub fn rho(&self, x: f64, t: f64) -> f64 {
        let s2 = self.sigma2(t);
        (2.0 * std::f64::consts::PI * s2).powf(-0.5) * (-x * x / (2.0 * s2)).exp()
    }

    pub fn fields(&self, x: f64, t: f64) -> OracleFields {
        let (h, m) = (self.hbar, self.mass);
        let kt = self.kappa() * t;
        let s2 = self.sigma2(t);
        let rho = self.rho(x, t);
        let s = h * kt * x * x / (4.0 * s2) - 0.5 * h * kt.atan();
        let half_log = 0.5 * h * (rho / self.rho_ref).ln();
        let v = h * kt * x / (2.0 * m * s2);
        let u = -h * x / (m * s2);
        let q = h * h / (4.0 * m * s2) - h * h * x * x / (8.0 * m * s2 * s2);
        let tail = h * h * x * x / (4.0 * m * s2 * s2);
        OracleFields {
            rho,
            s,
            s_plus: s + half_log,
            s_minus: s - half_log,
            v,
            v_plus: v + 0.5 * u,
            v_minus: v - 0.5 * u,
            u,
            q,
            q_plus: h * h * (1.0 + kt) / (4.0 * m * s2) - tail,
            q_minus: h * h * (1.0 - kt) / (4.0 * m * s2) - tail,
        }
    }

    pub fn psi(&self, x: f64, t: f64) -> Complex64 {
        let f = self.fields(x, t);
        Complex64::from_polar(f.rho.sqrt(), f.s / self.hbar)
    }

    /// Value and x-gradient of one field.
    pub fn sample(&self, field: OracleField, x: f64, t: f64) -> Sample {
        let (h, m) = (self.hbar, self.mass);
        let kt = self.kappa() * t;
        let s2 = self.sigma2(t);
        let f = self.fields(x, t);
        let dv = h * kt / (2.0 * m * s2);
        let du = -h / (m * s2);
        let dv_plus = dv + 0.5 * du;
        let dv_minus = dv - 0.5 * du;
        let dq_pm = -h * h * x / (2.0 * m * s2 * s2);
        let dq = -h * h * x / (4.0 * m * s2 * s2);
        let (value, gradient) = match field {
            OracleField::Rho => (f.rho, -x / s2 * f.rho),
            OracleField::S => (f.s, m * f.v),
            OracleField::SPlus => (f.s_plus, m * f.v_plus),
            OracleField::SMinus => (f.s_minus, m * f.v_minus),
            OracleField::V => (f.v, dv),
            OracleField::VPlus => (f.v_plus, dv_plus),
            OracleField::VMinus => (f.v_minus, dv_minus),
            OracleField::U => (f.u, du),
            OracleField::Q => (f.q, dq),
            OracleField::QPlus => (f.q_plus, dq_pm),
            OracleField::QMinus => (f.q_minus, dq_pm),
            OracleField::Lagrangian => (0.5 * m * f.v * f.v - f.q, m * f.v * dv - dq),
            OracleField::LagrangianPlus => (
                0.5 * m * f.v_plus * f.v_plus - f.q_plus,
                m * f.v_plus * dv_plus - dq_pm,
            ),
            OracleField::LagrangianMinus => (
                0.5 * m * f.v_minus * f.v_minus - f.q_minus,
                m * f.v_minus * dv_minus - dq_pm,
            ),
        };
        Sample { value, gradient }
    }

    /// A sampler for `scale × field`.
    pub fn sampler(&self, field: OracleField) -> AnalyticField {
        AnalyticField {
            oracle: *self,
            field,
            scale: 1.0,
        }
    }

    /// `∂q/∂q0` of a path family (label independent for this state).
    pub fn jacobian(&self, kind: PathKind, t: f64) -> f64 {
        let kt = self.kappa() * t;
        let spread = (1.0 + kt * kt).sqrt();
        match kind {
            PathKind::Dbb => spread,
            PathKind::Plus => spread * (-kt.atan()).exp(),
            PathKind::Minus => spread * kt.atan().exp(),
            PathKind::HalfPlus => spread.sqrt() * (-0.5 * kt.atan()).exp(),
        }
    }

    pub fn path(&self, kind: PathKind, q0: f64, t: f64) -> f64 {
        q0 * self.jacobian(kind, t)
    }

    pub fn label_generator(&self, case: CompositionCase, q0: f64, t: f64) -> f64 {
        let kt = self.kappa() * t;
        match case {
            CompositionCase::I => q0 * kt.atan().exp(),
            CompositionCase::Ii => q0 * (1.0 + kt * kt).powf(0.25) * (0.5 * kt.atan()).exp(),
            CompositionCase::Converse => q0 * (-kt.atan()).exp(),
        }
    }
}

/// Closed-form field as a sampler, defined for all `(x, t)`.
#[derive(Clone, Copy, Debug)]
pub struct AnalyticField {
    oracle: GaussianParams,
    field: OracleField,
    scale: f64,
}

impl AnalyticField {
    pub fn scaled(mut self, scale: f64) -> Self {
        self.scale *= scale;
        self
    }
}

impl FieldSampler for AnalyticField {
    fn sample(&self, x: f64, t: f64) -> Result<Sample> {
        let s = self.oracle.sample(self.field, x, t);
        Ok(Sample {
            value: self.scale * s.value,
            gradient: self.scale * s.gradient,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const TOL: f64 = 1e-12;

    fn g() -> GaussianParams {
        GaussianParams::unit()
    }

    #[test]
    fn kappa_is_one_in_unit_scenario() {
        assert!((g().kappa() - 1.0).abs() < TOL);
        assert!((g().sigma(1.0) - g().sigma0 * 2f64.sqrt()).abs() < TOL);
        assert!((g().sigma(0.0) - g().sigma0).abs() < TOL);
    }

    #[test]
    fn fields_at_origin_t1() {
        let f = g().fields(0.0, 1.0);
        assert!((f.rho - (2.0 * PI).powf(-0.5)).abs() < TOL);
        assert!((f.s + PI / 8.0).abs() < TOL);
        assert!((f.rho - 0.398942).abs() < 1e-6);
        assert!((f.s + 0.392699).abs() < 1e-6);
    }

    #[test]
    fn velocities_at_unit_point_t0() {
        let f = g().fields(1.0, 0.0);
        assert!((f.v_plus + 1.0).abs() < TOL);
        assert!((f.v_minus - 1.0).abs() < TOL);
        assert!((f.u + 2.0).abs() < TOL);
        assert!((f.q_plus + 0.5).abs() < TOL && (f.q_minus + 0.5).abs() < TOL);
        assert!(f.q.abs() < TOL);
        let f0 = g().fields(0.0, 0.0);
        assert!((f0.q_plus - 0.5).abs() < TOL && (f0.q - 0.5).abs() < TOL);
    }

    #[test]
    fn osmotic_identity() {
        // v+ - v- = (ħ/m) ∂ ln ρ, with ∂ ln ρ by central differences.
        let o = g();
        for &(x, t) in &[(0.3, 0.2), (-1.7, 0.9), (2.5, 1.5)] {
            let h = 1e-5;
            let dlog = ((o.rho(x + h, t)).ln() - (o.rho(x - h, t)).ln()) / (2.0 * h);
            let f = o.fields(x, t);
            assert!((f.v_plus - f.v_minus - dlog).abs() < 1e-8);
        }
    }

    #[test]
    fn action_split_reproduces_density() {
        let o = g().with_rho_ref(0.3);
        let f = o.fields(0.7, 0.4);
        let rho = 0.3 * ((f.s_plus - f.s_minus) / o.hbar).exp();
        assert!((rho - f.rho).abs() < 1e-14);
        assert!((0.5 * (f.s_plus + f.s_minus) - f.s).abs() < 1e-14);
    }

    #[test]
    fn printed_path_values() {
        let o = g();
        assert!((o.path(PathKind::Dbb, 1.0, 1.0) - 2f64.sqrt()).abs() < TOL);
        assert!((o.path(PathKind::Plus, 1.0, 1.0) - 2f64.sqrt() * (-PI / 4.0).exp()).abs() < TOL);
        assert!((o.path(PathKind::Minus, 1.0, 1.0) - 3.101766).abs() < 1e-6);
        assert!((o.path(PathKind::HalfPlus, 1.0, 1.0) - 0.802991).abs() < 1e-6);
        for kind in [
            PathKind::Dbb,
            PathKind::Plus,
            PathKind::Minus,
            PathKind::HalfPlus,
        ] {
            assert_eq!(o.path(kind, 0.37, 0.0), 0.37);
        }
    }

    #[test]
    fn printed_label_generators() {
        let o = g();
        assert!((o.label_generator(CompositionCase::I, 1.0, 1.0) - 2.193280).abs() < 1e-6);
        assert!((o.label_generator(CompositionCase::Converse, 1.0, 1.0) - 0.455938).abs() < 1e-6);
        assert!((o.label_generator(CompositionCase::Ii, 1.0, 1.0) - 1.761183).abs() < 1e-6);
        for case in [
            CompositionCase::I,
            CompositionCase::Ii,
            CompositionCase::Converse,
        ] {
            assert_eq!(o.label_generator(case, -0.8, 0.0), -0.8);
        }
    }

    /// Richardson-extrapolated central difference in t.
    fn richardson(f: impl Fn(f64) -> f64, t: f64) -> f64 {
        let d = |h: f64| (f(t + h) - f(t - h)) / (2.0 * h);
        let h = 1e-3;
        (4.0 * d(h / 2.0) - d(h)) / 3.0
    }

    #[test]
    fn paths_are_integral_curves_of_the_oracle_velocities() {
        let o = g();
        for &q0 in &[-1.3, 0.4, 2.0] {
            for &t in &[0.1, 0.5, 1.0, 2.0] {
                let cases = [
                    (PathKind::Dbb, o.fields(o.path(PathKind::Dbb, q0, t), t).v),
                    (
                        PathKind::Plus,
                        o.fields(o.path(PathKind::Plus, q0, t), t).v_plus,
                    ),
                    (
                        PathKind::Minus,
                        o.fields(o.path(PathKind::Minus, q0, t), t).v_minus,
                    ),
                    (
                        PathKind::HalfPlus,
                        0.5 * o.fields(o.path(PathKind::HalfPlus, q0, t), t).v_plus,
                    ),
                ];
                for (kind, v) in cases {
                    let qdot = richardson(|s| o.path(kind, q0, s), t);
                    assert!((qdot - v).abs() < 1e-8, "{kind:?} {q0} {t}: {qdot} vs {v}");
                }
            }
        }
    }

    #[test]
    fn composition_identities_hold_on_lattice() {
        let o = g();
        for i in 0..9 {
            let q0 = -2.0 + 0.5 * i as f64;
            for j in 0..9 {
                let t = 0.25 * j as f64;
                let dbb = o.path(PathKind::Dbb, q0, t);
                let plus = o.path(PathKind::Plus, q0, t);
                let via_i = o.path(
                    PathKind::Plus,
                    o.label_generator(CompositionCase::I, q0, t),
                    t,
                );
                let via_ii = o.path(
                    PathKind::HalfPlus,
                    o.label_generator(CompositionCase::Ii, q0, t),
                    t,
                );
                let via_conv = o.path(
                    PathKind::Dbb,
                    o.label_generator(CompositionCase::Converse, q0, t),
                    t,
                );
                assert!((via_i - dbb).abs() < 1e-10);
                assert!((via_ii - dbb).abs() < 1e-10);
                assert!((via_conv - plus).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn corrected_sign_solves_the_bihj_equations() {
        // ∂tS± + (∂S±)²/2m + Q± = 0 with the derived sign of Q±, and the
        // printed sign leaves an O(ħκ) remainder.
        let o = g();
        for &(x, t) in &[(0.0, 0.0), (1.0, 0.0), (-0.8, 0.6), (1.9, 1.3)] {
            let f = o.fields(x, t);
            let dsp = richardson(|s| o.fields(x, s).s_plus, t);
            let dsm = richardson(|s| o.fields(x, s).s_minus, t);
            let m = o.mass;
            let r_plus = dsp + 0.5 * m * f.v_plus * f.v_plus + f.q_plus;
            let r_minus = dsm + 0.5 * m * f.v_minus * f.v_minus + f.q_minus;
            assert!(r_plus.abs() < 1e-8, "{x} {t}: {r_plus}");
            assert!(r_minus.abs() < 1e-8, "{x} {t}: {r_minus}");

            let d2_s_minus = o.sample(OracleField::VMinus, x, t).gradient * m;
            let printed_q_plus = f.q_plus - o.hbar / m * d2_s_minus;
            let printed = dsp + 0.5 * m * f.v_plus * f.v_plus + printed_q_plus;
            assert!(printed.abs() > 0.1);
        }
    }

    #[test]
    fn polar_hj_equation_holds() {
        let o = g();
        let (x, t) = (0.9, 0.7);
        let f = o.fields(x, t);
        let ds = richardson(|s| o.fields(x, s).s, t);
        assert!((ds + 0.5 * f.v * f.v + f.q).abs() < 1e-8);
    }

    #[test]
    fn sampler_gradients_match_finite_differences() {
        let o = g();
        let fields = [
            OracleField::Rho,
            OracleField::S,
            OracleField::SPlus,
            OracleField::SMinus,
            OracleField::V,
            OracleField::VPlus,
            OracleField::VMinus,
            OracleField::U,
            OracleField::Q,
            OracleField::QPlus,
            OracleField::QMinus,
            OracleField::Lagrangian,
            OracleField::LagrangianPlus,
            OracleField::LagrangianMinus,
        ];
        let (x, t, h) = (0.63, 0.45, 1e-5);
        for field in fields {
            let s = o.sample(field, x, t);
            let fd =
                (o.sample(field, x + h, t).value - o.sample(field, x - h, t).value) / (2.0 * h);
            assert!(
                (s.gradient - fd).abs() < 1e-7 * (1.0 + fd.abs()),
                "{field:?}"
            );
        }
    }

    #[test]
    fn analytic_wavefunction_at_origin() {
        let psi = g().psi(0.0, 1.0);
        assert!((psi.re - 0.58354).abs() < 1e-5);
        assert!((psi.im + 0.24171).abs() < 1e-5);
    }
}
