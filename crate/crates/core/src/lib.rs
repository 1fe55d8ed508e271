//! Bi-Hamilton-Jacobi trajectory dynamics for one-dimensional Schrödinger
//! evolution.
//!
//! The wavefunction is split into two real action fields `S± = S ± (ħ/2) ln ρ`
//! whose velocity fields `v± = ∂S±/m` generate two coupled trajectory
//! congruences. This crate propagates those congruences (driven by reference
//! fields or autonomously), rebuilds `ψ` from the actions they accumulate,
//! and checks the composition of integral curves of summed velocity fields
//! against closed-form Gaussian solutions and a Crank-Nicolson grid solver.
//!
//! Module map:
//!
//! * [`reference`]: initial states, Crank-Nicolson propagation, analytic series
//! * [`fields`]: Eulerian fields ρ, S, S±, v±, u, Q, Q± and field-equation residuals
//! * [`congruence`]: labeled trajectory ensembles along sampled velocity fields
//! * [`autonomous`]: wavefunction-free coupled propagation of the ± congruences
//! * [`reconstruct`]: ψ and ρ rebuilt from accumulated actions
//! * [`compose`]: integral curves of `v_A + v_B` from curves of `v_A`, source terms
//! * [`oracle`]: closed forms for the free Gaussian at rest
//! * [`run`]: scenario configuration, commands, and deterministic outputs

pub mod autonomous;
pub mod compose;
pub mod config;
pub mod congruence;
pub mod error;
pub mod fd;
pub mod fields;
pub mod interp;
pub mod oracle;
pub mod output;
pub mod params;
pub mod reconstruct;
pub mod reference;
pub mod run;
pub mod sampler;
pub mod verify;

pub use error::{Error, Result};
pub use params::{PhysicalParams, Potential, SpatialGrid, TimeBase};
