//! Scenario configuration (JSON, snake_case field names).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::congruence::SpanRule;
use crate::error::{Error, Result};
use crate::oracle::CompositionCase;
use crate::params::{PhysicalParams, Potential, SpatialGrid};
use crate::reference::InitialStateSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Trajectories driven by the Eulerian fields of the reference series.
    ReferenceDriven,
    /// Coupled ± congruences propagated from the initial actions alone.
    Autonomous,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "reference" | "reference_driven" => Some(Mode::ReferenceDriven),
            "autonomous" => Some(Mode::Autonomous),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Crank-Nicolson step, also the trajectory step.
    pub dt_solver: f64,
    /// Spacing of stored field snapshots and trajectory frames; a multiple
    /// of `dt_solver`.
    pub dt_fields: f64,
    pub t_final: f64,
}

impl TimeConfig {
    pub fn solver_steps(&self) -> usize {
        (self.t_final / self.dt_solver).round() as usize
    }

    pub fn stride(&self) -> usize {
        (self.dt_fields / self.dt_solver).round() as usize
    }

    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.dt_solver > 0.0) {
            p.push(format!(
                "time.dt_solver must be > 0 (got {})",
                self.dt_solver
            ));
        }
        if !(self.dt_fields > 0.0) {
            p.push(format!(
                "time.dt_fields must be > 0 (got {})",
                self.dt_fields
            ));
        }
        if !(self.t_final > 0.0) {
            p.push(format!("time.t_final must be > 0 (got {})", self.t_final));
        }
        if !p.is_empty() {
            return p;
        }
        if self.dt_solver > self.dt_fields {
            p.push(format!(
                "time.dt_solver ({}) must not exceed time.dt_fields ({})",
                self.dt_solver, self.dt_fields
            ));
        }
        let integral = |a: f64, b: f64| ((a / b) - (a / b).round()).abs() <= 1e-9 * (a / b);
        if !integral(self.dt_fields, self.dt_solver) {
            p.push("time.dt_fields must be an integer multiple of time.dt_solver".into());
        }
        if !integral(self.t_final, self.dt_fields) {
            p.push("time.t_final must be an integer multiple of time.dt_fields".into());
        }
        if self.solver_steps() / self.stride().max(1) < 2 {
            p.push("time.t_final must span at least two field snapshots".into());
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelConfig {
    pub count: usize,
    pub plus_span: SpanRule,
    /// The minus congruence expands where the plus one contracts, so it
    /// usually needs a narrower span to stay inside the valid region.
    pub minus_span: SpanRule,
    /// Span of the de Broglie-Bohm labels.
    pub dbb_span: SpanRule,
    /// Composed-curve labels as a fraction of A's label span.
    pub composition_fraction: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            count: 101,
            plus_span: SpanRule::default(),
            minus_span: SpanRule::default(),
            dbb_span: SpanRule::default(),
            composition_fraction: 0.4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutonomousConfig {
    pub dt: f64,
    pub t_final: f64,
    pub label_count: usize,
    pub span_min: f64,
    pub span_max: f64,
    /// Frames stored every `stride` steps.
    pub stride: usize,
    /// Smooth `div w` across labels before building partner potentials.
    #[serde(default)]
    pub smoothing: bool,
}

impl Default for AutonomousConfig {
    fn default() -> Self {
        Self {
            dt: 2e-4,
            t_final: 0.5,
            label_count: 201,
            span_min: -4.0,
            span_max: 4.0,
            stride: 50,
            smoothing: false,
        }
    }
}

impl AutonomousConfig {
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.dt > 0.0 && self.t_final > 0.0) {
            p.push("autonomous.dt and autonomous.t_final must be > 0".into());
        } else if self.stride == 0 || self.steps() % self.stride != 0 {
            p.push("autonomous.stride must divide the number of autonomous steps".into());
        }
        if self.label_count < 5 {
            p.push(format!(
                "autonomous.label_count must be >= 5 (got {})",
                self.label_count
            ));
        }
        if !(self.span_min < self.span_max) {
            p.push("autonomous.span_min must be < autonomous.span_max".into());
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Absolute density mask; `None` means `1e-12 · max ρ0`.
    pub rho_min: Option<f64>,
    pub rho_ref: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            rho_min: None,
            rho_ref: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub hbar: f64,
    pub mass: f64,
    #[serde(default)]
    pub potential: Potential,
    pub grid: SpatialGrid,
    pub initial_state: InitialStateSpec,
    pub time: TimeConfig,
    #[serde(default)]
    pub labels: LabelConfig,
    #[serde(default)]
    pub autonomous: AutonomousConfig,
    pub mode: Mode,
    pub composition_case: CompositionCase,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub output_dir: Option<String>,
    /// Also write the raw reference wavefunction from `simulate`.
    #[serde(default)]
    pub reference_fields: bool,
}

impl ScenarioConfig {
    /// The bundled free-Gaussian scenario: `ħ = m = 1`, `σ0² = 1/2`.
    pub fn gaussian() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            potential: Potential::Free,
            grid: SpatialGrid {
                x_min: -10.0,
                x_max: 10.0,
                n_points: 2048,
            },
            initial_state: InitialStateSpec::gaussian_at_rest(0.5f64.sqrt()),
            time: TimeConfig {
                dt_solver: 1e-3,
                dt_fields: 1e-2,
                t_final: 1.0,
            },
            labels: LabelConfig {
                minus_span: SpanRule::Explicit {
                    min: -2.2,
                    max: 2.2,
                },
                ..LabelConfig::default()
            },
            autonomous: AutonomousConfig::default(),
            mode: Mode::ReferenceDriven,
            composition_case: CompositionCase::I,
            thresholds: Thresholds::default(),
            output_dir: None,
            reference_fields: false,
        }
    }

    pub fn params(&self) -> PhysicalParams {
        PhysicalParams {
            hbar: self.hbar,
            mass: self.mass,
            potential: self.potential.clone(),
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut p = self.params().problems();
        p.extend(self.grid.problems());
        p.extend(self.initial_state.problems());
        p.extend(self.time.problems());
        p.extend(self.autonomous.problems());
        if self.labels.count < 5 {
            p.push(format!(
                "labels.count must be >= 5 (got {})",
                self.labels.count
            ));
        }
        for rule in [
            self.labels.plus_span,
            self.labels.minus_span,
            self.labels.dbb_span,
        ] {
            p.extend(rule.problems());
        }
        if !(self.labels.composition_fraction > 0.0 && self.labels.composition_fraction <= 1.0) {
            p.push("labels.composition_fraction must lie in (0, 1]".into());
        }
        if !(self.thresholds.rho_ref > 0.0) {
            p.push("thresholds.rho_ref must be > 0".into());
        }
        if let Some(r) = self.thresholds.rho_min {
            if !(r > 0.0) {
                p.push("thresholds.rho_min must be > 0 when given".into());
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Parses and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
