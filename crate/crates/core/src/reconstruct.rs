//! Wavefunction and density rebuilt from trajectory actions alone.
//!
//! ```text
//! ψ = exp[(1+i)χ₊/2ħ] · exp[(−1+i)χ₋/2ħ] · √ρ_ref      (bi-HJ)
//! ρ = ρ_ref exp[(χ₊ − χ₋)/ħ]
//! ψ = √(ρ0(q0)/J(q0,t)) · exp[iχ(q0,t)/ħ]              (polar)
//! ```
//!
//! with each action read at the label whose trajectory occupies `x` at `t`.

use num_complex::Complex64;

use crate::autonomous::BiCongruence;
use crate::congruence::Congruence;
use crate::error::Result;
use crate::params::PhysicalParams;

/// `(χ₊, χ₋)` at `(x, t)`.
pub fn actions_at(
    bi: &BiCongruence,
    params: &PhysicalParams,
    x: f64,
    t: f64,
) -> Result<(f64, f64)> {
    let m = params.mass;
    let kp = bi.plus.frame(t)?;
    let km = bi.minus.frame(t)?;
    let qp = bi.plus.invert_at_frame(&bi.plus.position_map(kp)?, x, kp)?;
    let qm = bi
        .minus
        .invert_at_frame(&bi.minus.position_map(km)?, x, km)?;
    Ok((bi.plus.action_at(kp, qp, m), bi.minus.action_at(km, qm, m)))
}

pub fn bihj_wavefunction_at(
    bi: &BiCongruence,
    params: &PhysicalParams,
    x: f64,
    t: f64,
    rho_ref: f64,
) -> Result<Complex64> {
    let (cp, cm) = actions_at(bi, params, x, t)?;
    Ok(bihj_amplitude(cp, cm, params.hbar, rho_ref))
}

/// `exp[(1+i)χ₊/2ħ] exp[(−1+i)χ₋/2ħ] √ρ_ref`.
pub fn bihj_amplitude(chi_plus: f64, chi_minus: f64, hbar: f64, rho_ref: f64) -> Complex64 {
    let modulus = ((chi_plus - chi_minus) / (2.0 * hbar)).exp() * rho_ref.sqrt();
    Complex64::from_polar(modulus, (chi_plus + chi_minus) / (2.0 * hbar))
}

pub fn probability_from_actions(
    bi: &BiCongruence,
    params: &PhysicalParams,
    x: f64,
    t: f64,
    rho_ref: f64,
) -> Result<f64> {
    let (cp, cm) = actions_at(bi, params, x, t)?;
    Ok(rho_ref * ((cp - cm) / params.hbar).exp())
}

pub fn polar_wavefunction_at(
    dbb: &Congruence,
    rho0: impl Fn(f64) -> f64,
    params: &PhysicalParams,
    x: f64,
    t: f64,
) -> Result<Complex64> {
    let k = dbb.frame(t)?;
    let q0 = dbb.invert_at_frame(&dbb.position_map(k)?, x, k)?;
    let j = dbb.at_label(&dbb.jacobians[k], q0);
    let chi = dbb.action_at(k, q0, params.mass);
    Ok(Complex64::from_polar(
        (rho0(q0) / j).sqrt(),
        chi / params.hbar,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congruence::{integrate_congruence, ActionSpec, LabelSet};
    use crate::oracle::{GaussianParams, OracleField};
    use crate::params::TimeBase;

    fn g() -> GaussianParams {
        GaussianParams::unit()
    }

    fn driven(field: OracleField, rate: OracleField, initial: OracleField) -> Congruence {
        let labels = LabelSet::uniform(-3.5, 3.5, 141).unwrap();
        let chi0 = labels
            .labels()
            .iter()
            .map(|&x| g().sample(initial, x, 0.0).value)
            .collect();
        integrate_congruence(
            &g().sampler(field),
            &labels,
            TimeBase::from_zero(1e-3, 1000),
            Some(ActionSpec {
                rate: &g().sampler(rate),
                initial: chi0,
            }),
        )
        .unwrap()
    }

    fn pair() -> BiCongruence {
        BiCongruence::from_pair(
            driven(
                OracleField::VPlus,
                OracleField::LagrangianPlus,
                OracleField::SPlus,
            ),
            driven(
                OracleField::VMinus,
                OracleField::LagrangianMinus,
                OracleField::SMinus,
            ),
        )
        .unwrap()
    }

    #[test]
    fn bihj_values_at_origin() {
        let bi = pair();
        let p = PhysicalParams::natural();
        let psi = bihj_wavefunction_at(&bi, &p, 0.0, 1.0, 1.0).unwrap();
        assert!((psi - Complex64::new(0.5835396611093846, -0.24171004181410682)).norm() < 1e-6);
        let rho = probability_from_actions(&bi, &p, 0.0, 1.0, 1.0).unwrap();
        assert!((rho / g().rho(0.0, 1.0) - 1.0).abs() < 1e-6);
        for x in [-1.0, 0.0, 0.7] {
            let psi0 = bihj_wavefunction_at(&bi, &p, x, 0.0, 1.0).unwrap();
            assert!((psi0 - g().psi(x, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn polar_values() {
        let dbb = driven(OracleField::V, OracleField::Lagrangian, OracleField::S);
        let p = PhysicalParams::natural();
        let rho0 = |x: f64| g().rho(x, 0.0);
        let psi = polar_wavefunction_at(&dbb, rho0, &p, 2f64.sqrt(), 1.0).unwrap();
        assert!((psi.norm() - (rho0(1.0) / 2f64.sqrt()).sqrt()).abs() < 1e-7);
        let phase = polar_wavefunction_at(&dbb, rho0, &p, 0.0, 1.0)
            .unwrap()
            .arg();
        assert!((phase + std::f64::consts::FRAC_PI_8).abs() < 1e-6);
        let psi0 = polar_wavefunction_at(&dbb, rho0, &p, 0.4, 0.0).unwrap();
        assert!((psi0 - g().psi(0.4, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn mean_and_half_difference_of_actions() {
        let bi = pair();
        let p = PhysicalParams::natural();
        for x in [-1.2, 0.0, 0.5] {
            let (cp, cm) = actions_at(&bi, &p, x, 0.5).unwrap();
            let f = g().fields(x, 0.5);
            assert!((0.5 * (cp + cm) - f.s).abs() < 1e-6);
            assert!((0.5 * (cp - cm) - 0.5 * f.rho.ln()).abs() < 1e-6);
        }
    }

    #[test]
    fn time_not_stored_is_rejected() {
        let bi = pair();
        assert!(bihj_wavefunction_at(&bi, &PhysicalParams::natural(), 0.0, 0.00055, 1.0).is_err());
    }
}
