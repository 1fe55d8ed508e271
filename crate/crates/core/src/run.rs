//! Command orchestration: each command builds an in-memory [`RunBundle`]
//! whose files are written by [`emit_outputs`] together with a manifest.

use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use crate::autonomous::{cross_map, propagate_autonomous, AutonomousSetup, BiCongruence};
use crate::compose::{
    compose_trajectories, conservation_check, source_term, CompositionResult, CompositionSetup,
};
use crate::config::{Mode, ScenarioConfig, TimeConfig};
use crate::congruence::{integrate_congruence, ActionSpec, Congruence, LabelSet, SpanRule};
use crate::error::{Error, Result};
use crate::fields::FieldSeries;
use crate::interp::cubic_at;
use crate::oracle::{CompositionCase, GaussianParams, OracleField, PathKind};
use crate::output::{float, json_file, write_files, Csv, InventoryEntry, OutputFile};
use crate::params::TimeBase;
use crate::reconstruct::{bihj_wavefunction_at, polar_wavefunction_at};
use crate::reference::{
    build_initial_state, evolve_crank_nicolson_strided, WaveSeries, WaveSnapshot,
};
use crate::sampler::{FieldSampler, LinearCombination, Sample, SeriesField, SeriesSampler};
use crate::verify::{run_acceptance, Check};

const MODULE: &str = "run";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Compose,
    Reconstruct,
    Verify,
    Oracle,
    Figure,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Compose => "compose",
            Command::Reconstruct => "reconstruct",
            Command::Verify => "verify",
            Command::Oracle => "oracle",
            Command::Figure => "figure",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureId {
    /// Both congruence views of the Gaussian slit, forward and backward.
    Fig2,
    /// Composed path, label generator, and the constituent family.
    Fig3,
}

impl FigureId {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fig2" => Some(FigureId::Fig2),
            "fig3" => Some(FigureId::Fig3),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Overrides the configured composition case.
    pub case: Option<CompositionCase>,
    pub figure: Option<FigureId>,
}

/// Everything a command produced. Timings are kept out of the written files
/// so repeated runs stay byte-identical.
#[derive(Clone, Debug)]
pub struct RunBundle {
    pub command: Command,
    pub config: ScenarioConfig,
    pub files: Vec<OutputFile>,
    pub checks: Vec<Check>,
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
    pub timings: Vec<(String, f64)>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    code_version: &'static str,
    config: &'a ScenarioConfig,
    files: Vec<InventoryEntry>,
    checks: &'a [Check],
    all_passed: bool,
}

impl RunBundle {
    fn new(command: Command, config: &ScenarioConfig) -> Self {
        Self {
            command,
            config: config.clone(),
            files: Vec::new(),
            checks: Vec::new(),
            summary: Vec::new(),
            timings: Vec::new(),
        }
    }

    /// True when every check passed (vacuously for a run without checks).
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn manifest(&self) -> Result<OutputFile> {
        json_file(
            "manifest.json",
            &Manifest {
                command: self.command.name(),
                code_version: env!("CARGO_PKG_VERSION"),
                config: &self.config,
                files: self.files.iter().map(OutputFile::inventory).collect(),
                checks: &self.checks,
                all_passed: self.passed(),
            },
        )
    }

    /// The command's files followed by the manifest.
    pub fn all_files(&self) -> Result<Vec<OutputFile>> {
        let mut files = self.files.clone();
        files.push(self.manifest()?);
        Ok(files)
    }
}

pub fn emit_outputs(bundle: &RunBundle, dir: &Path) -> Result<Vec<InventoryEntry>> {
    write_files(dir, &bundle.all_files()?)
}

struct Stopwatch {
    last: Instant,
    laps: Vec<(String, f64)>,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            last: Instant::now(),
            laps: Vec::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.laps
            .push((name.to_string(), (now - self.last).as_secs_f64()));
        self.last = now;
    }
}

pub fn run(command: Command, config: &ScenarioConfig, options: RunOptions) -> Result<RunBundle> {
    config.validate()?;
    let mut clock = Stopwatch::start();
    let mut bundle = RunBundle::new(command, config);
    match command {
        Command::Simulate => match config.mode {
            Mode::ReferenceDriven => simulate_reference(config, &mut bundle, &mut clock)?,
            Mode::Autonomous => simulate_autonomous(config, &mut bundle, &mut clock)?,
        },
        Command::Compose => compose(
            config,
            options.case.unwrap_or(config.composition_case),
            &mut bundle,
            &mut clock,
        )?,
        Command::Reconstruct => reconstruct(config, &mut bundle, &mut clock)?,
        Command::Verify => {
            let report = run_acceptance(config)?;
            clock.lap("acceptance");
            #[derive(Serialize)]
            struct Acceptance<'a> {
                all_passed: bool,
                criteria: Vec<crate::verify::CriterionSummary>,
                checks: &'a [Check],
            }
            bundle.files.push(json_file(
                "acceptance.json",
                &Acceptance {
                    all_passed: report.all_passed(),
                    criteria: report.criteria(),
                    checks: &report.checks,
                },
            )?);
            bundle.summary = report.lines();
            bundle.checks = report.checks;
        }
        Command::Oracle => oracle_table(config, &mut bundle)?,
        Command::Figure => match options.figure {
            Some(FigureId::Fig2) => figure_2(config, &mut bundle, &mut clock)?,
            Some(FigureId::Fig3) => figure_3(
                config,
                options.case.unwrap_or(config.composition_case),
                &mut bundle,
                &mut clock,
            )?,
            None => {
                return Err(Error::precondition(
                    MODULE,
                    "figure needs --id fig2 or fig3",
                ))
            }
        },
    }
    bundle.timings = clock.laps;
    Ok(bundle)
}

/// Runs `simulate` twice on a reduced copy of `config` and counts the
/// output files that differ.
pub fn determinism_probe(config: &ScenarioConfig) -> Result<usize> {
    let mut small = config.clone();
    small.grid.n_points = 512;
    small.time = TimeConfig {
        dt_solver: 5e-3,
        dt_fields: 2.5e-2,
        t_final: 0.25,
    };
    small.labels.count = 21;
    small.mode = Mode::ReferenceDriven;
    let a = run(Command::Simulate, &small, RunOptions::default())?.all_files()?;
    let b = run(Command::Simulate, &small, RunOptions::default())?.all_files()?;
    let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    Ok(differing + a.len().abs_diff(b.len()))
}

/// Crank-Nicolson run of the scenario and its Eulerian fields at `dt_fields`.
pub struct Reference {
    pub wave: WaveSeries,
    pub fields: FieldSeries,
}

impl Reference {
    /// Forward (`direction = 1`) or backward (`−1`) to `t_final`.
    pub fn compute(config: &ScenarioConfig, direction: f64) -> Result<Self> {
        let params = config.params();
        let psi0 = build_initial_state(&config.initial_state, &config.grid, &params)?;
        let wave = evolve_crank_nicolson_strided(
            &psi0,
            &params,
            direction * config.time.dt_solver,
            config.time.solver_steps(),
            config.time.stride(),
        )?;
        let fields = FieldSeries::from_wave_series(
            &wave,
            config.thresholds.rho_min,
            config.thresholds.rho_ref,
        )?;
        Ok(Self { wave, fields })
    }

    pub fn rho0(&self) -> &[f64] {
        &self.fields.snapshots[0].rho
    }

    pub fn labels(&self, rule: SpanRule, count: usize) -> Result<LabelSet> {
        rule.labels(&self.fields.grid(), self.rho0(), count)
    }

    /// Cubic interpolant of the initial density.
    pub fn rho0_fn(&self) -> impl Fn(f64) -> f64 + '_ {
        let xs: Vec<f64> = self.fields.grid().points().collect();
        move |x| cubic_at(&xs, self.rho0(), x).0
    }
}

/// Congruence of one series field, with actions when `action` names the rate
/// field and the initial action field.
pub fn series_congruence(
    series: &FieldSeries,
    labels: &LabelSet,
    velocity: SeriesField,
    action: Option<(SeriesField, SeriesField)>,
    times: TimeBase,
) -> Result<Congruence> {
    let v = SeriesSampler::new(series, velocity);
    match action {
        None => integrate_congruence(&v, labels, times, None),
        Some((rate, initial)) => {
            let s0 = SeriesSampler::new(series, initial);
            let t0 = series.time_base.start;
            let chi0 = labels
                .labels()
                .iter()
                .map(|&q| s0.value(q, t0))
                .collect::<Result<Vec<f64>>>()?;
            integrate_congruence(
                &v,
                labels,
                times,
                Some(ActionSpec {
                    rate: &SeriesSampler::new(series, rate),
                    initial: chi0,
                }),
            )
        }
    }
}

/// `−f(x, −τ)`: a field of a backward series read as a forward flow in
/// `τ = −t`.
struct Reversed<S>(S);

impl<S: FieldSampler> FieldSampler for Reversed<S> {
    fn sample(&self, x: f64, tau: f64) -> Result<Sample> {
        let s = self.0.sample(x, -tau)?;
        Ok(Sample {
            value: -s.value,
            gradient: -s.gradient,
        })
    }

    fn time_span(&self) -> Option<(f64, f64)> {
        self.0.time_span().map(|(a, b)| (-b, -a))
    }
}

fn solver_times(config: &ScenarioConfig) -> TimeBase {
    TimeBase::from_zero(config.time.dt_solver, config.time.solver_steps())
}

fn trajectories_csv(sets: &[(&str, &Congruence)], stride: usize) -> Csv {
    let mut csv = Csv::new(&[
        "congruence_id",
        "label_index",
        "q0",
        "time",
        "q",
        "qdot",
        "J",
        "chi",
    ]);
    for (id, c) in sets {
        for (i, &q0) in c.labels.labels().iter().enumerate() {
            for k in (0..c.time_base.len()).step_by(stride) {
                csv.row([
                    id.to_string(),
                    i.to_string(),
                    float(q0),
                    float(c.time_base.time(k)),
                    float(c.positions[k][i]),
                    float(c.velocities[k][i]),
                    float(c.jacobians[k][i]),
                    float(c.actions[k][i]),
                ]);
            }
        }
    }
    csv
}

fn fields_csv(series: &FieldSeries) -> Csv {
    let mut csv = Csv::new(&[
        "time", "x", "rho", "S", "S_plus", "S_minus", "v_plus", "v_minus", "Q_plus", "Q_minus",
        "valid",
    ]);
    for snap in &series.snapshots {
        for i in 0..snap.len() {
            csv.row([
                float(snap.time),
                float(snap.grid.x(i)),
                float(snap.rho[i]),
                float(snap.s[i]),
                float(snap.s_plus[i]),
                float(snap.s_minus[i]),
                float(snap.v_plus[i]),
                float(snap.v_minus[i]),
                float(snap.q_plus[i]),
                float(snap.q_minus[i]),
                (snap.valid[i] as u8).to_string(),
            ]);
        }
    }
    csv
}

fn reference_csv(wave: &WaveSeries) -> Csv {
    let mut csv = Csv::new(&["time", "x", "re_psi", "im_psi"]);
    for snap in &wave.snapshots {
        for (i, psi) in snap.values.iter().enumerate() {
            csv.row([
                float(snap.time),
                float(snap.grid.x(i)),
                float(psi.re),
                float(psi.im),
            ]);
        }
    }
    csv
}

fn congruence_checks(
    checks: &mut Vec<Check>,
    sets: &[(&str, &Congruence)],
    mass: f64,
    actions: bool,
) {
    for (id, c) in sets {
        checks.push(Check::at_most(
            0,
            format!("{id}_jacobian_consistency"),
            c.jacobian_consistency(),
            1e-4,
        ));
        if actions {
            checks.push(Check::at_most(
                0,
                format!("{id}_action_gradient"),
                c.action_gradient_error(mass),
                1e-3,
            ));
        }
    }
}

/// The three driven congruences with actions.
fn driven_trio(config: &ScenarioConfig, r: &Reference) -> Result<(BiCongruence, Congruence)> {
    let count = config.labels.count;
    let times = solver_times(config);
    let plus = series_congruence(
        &r.fields,
        &r.labels(config.labels.plus_span, count)?,
        SeriesField::VPlus,
        Some((SeriesField::LagrangianPlus, SeriesField::SPlus)),
        times,
    )?;
    let minus = series_congruence(
        &r.fields,
        &r.labels(config.labels.minus_span, count)?,
        SeriesField::VMinus,
        Some((SeriesField::LagrangianMinus, SeriesField::SMinus)),
        times,
    )?;
    let dbb = series_congruence(
        &r.fields,
        &r.labels(config.labels.dbb_span, count)?,
        SeriesField::V,
        Some((SeriesField::Lagrangian, SeriesField::S)),
        times,
    )?;
    Ok((BiCongruence::from_pair(plus, minus)?, dbb))
}

fn simulate_reference(
    config: &ScenarioConfig,
    bundle: &mut RunBundle,
    clock: &mut Stopwatch,
) -> Result<()> {
    let r = Reference::compute(config, 1.0)?;
    clock.lap("reference");
    let (bi, dbb) = driven_trio(config, &r)?;
    clock.lap("congruences");

    let n0 = r.wave.snapshots[0].norm();
    let drift = r
        .wave
        .snapshots
        .iter()
        .fold(0.0f64, |m, s| m.max((s.norm() - n0).abs()));
    bundle
        .checks
        .push(Check::at_most(0, "norm_drift", drift, 1e-8));
    let sets = [("plus", &bi.plus), ("minus", &bi.minus), ("dbb", &dbb)];
    congruence_checks(&mut bundle.checks, &sets, config.mass, true);

    let fields = fields_csv(&r.fields);
    let trajectories = trajectories_csv(&sets, config.time.stride());
    bundle.summary.push(format!(
        "{} field snapshots, {} trajectory rows",
        r.fields.snapshots.len(),
        trajectories.rows()
    ));
    bundle.files.push(fields.into_file("fields.csv"));
    bundle
        .files
        .push(trajectories.into_file("trajectories.csv"));
    if config.reference_fields {
        bundle
            .files
            .push(reference_csv(&r.wave).into_file("reference_fields.csv"));
    }
    clock.lap("output");
    Ok(())
}

fn simulate_autonomous(
    config: &ScenarioConfig,
    bundle: &mut RunBundle,
    clock: &mut Stopwatch,
) -> Result<()> {
    let params = config.params();
    let psi0 = build_initial_state(&config.initial_state, &config.grid, &params)?;
    let initial = WaveSeries {
        params: params.clone(),
        grid: config.grid,
        time_base: TimeBase::from_zero(config.autonomous.dt, 0),
        snapshots: vec![psi0],
    };
    let fields0 = FieldSeries::from_wave_series(
        &initial,
        config.thresholds.rho_min,
        config.thresholds.rho_ref,
    )?;
    let a = config.autonomous;
    let labels = LabelSet::uniform(a.span_min, a.span_max, a.label_count)?;
    let bi = propagate_autonomous(&AutonomousSetup {
        s_plus0: &SeriesSampler::new(&fields0, SeriesField::SPlus),
        s_minus0: &SeriesSampler::new(&fields0, SeriesField::SMinus),
        plus_labels: labels.clone(),
        minus_labels: labels.clone(),
        params,
        start: 0.0,
        dt: a.dt,
        steps: a.steps(),
        stride: a.stride,
        smoothing: a.smoothing,
    })?;
    clock.lap("autonomous");

    let sets = [("plus", &bi.plus), ("minus", &bi.minus)];
    congruence_checks(&mut bundle.checks, &sets, config.mass, false);
    let mut crossmap = Csv::new(&["time", "q_plus0", "q_minus0"]);
    let tb = bi.time_base();
    for k in 0..tb.len() {
        let map = cross_map(&bi, tb.time(k))?;
        for q in map.plus_labels_in_overlap(labels.labels()) {
            crossmap.row([float(map.time()), float(q), float(map.minus_label(q)?)]);
        }
    }
    bundle.summary.push(format!(
        "{} frames, {} partner lookups outside the partner hull",
        tb.len(),
        bi.extrapolated_lookups
    ));
    bundle
        .files
        .push(trajectories_csv(&sets, 1).into_file("trajectories.csv"));
    bundle.files.push(crossmap.into_file("crossmap.csv"));
    clock.lap("output");
    Ok(())
}

struct CompositionRun {
    a_id: &'static str,
    a: Congruence,
    result: CompositionResult,
}

/// `(A field, A scale, B field, B scale)` of a case.
fn case_fields(case: CompositionCase) -> (SeriesField, f64, SeriesField, f64) {
    match case {
        CompositionCase::I => (SeriesField::VPlus, 1.0, SeriesField::U, -0.5),
        CompositionCase::Ii => (SeriesField::VPlus, 0.5, SeriesField::VMinus, 0.5),
        CompositionCase::Converse => (SeriesField::V, 1.0, SeriesField::U, 0.5),
    }
}

fn composition_run(
    config: &ScenarioConfig,
    r: &Reference,
    case: CompositionCase,
) -> Result<CompositionRun> {
    let (af, a_scale, bf, b_scale) = case_fields(case);
    let (a_id, span) = match case {
        CompositionCase::I => ("plus", config.labels.plus_span),
        CompositionCase::Ii => ("half_plus", config.labels.plus_span),
        CompositionCase::Converse => ("dbb", config.labels.dbb_span),
    };
    let count = config.labels.count;
    let a_labels = r.labels(span, count)?;
    let a_field = SeriesSampler::new(&r.fields, af).scaled(a_scale);
    let a = integrate_congruence(&a_field, &a_labels, solver_times(config), None)?;
    let b = SeriesSampler::new(&r.fields, bf).scaled(b_scale);
    let (lo, hi) = a_labels.span();
    let (mid, half) = (
        0.5 * (lo + hi),
        0.5 * (hi - lo) * config.labels.composition_fraction,
    );
    let result = compose_trajectories(&CompositionSetup {
        a: &a,
        field_b: &b,
        labels_c: LabelSet::uniform(mid - half, mid + half, count)?,
    })?;
    Ok(CompositionRun { a_id, a, result })
}

/// Stride of composed frames (step `2 dt_solver`) matching `dt_fields`.
fn composed_stride(config: &ScenarioConfig) -> usize {
    let s = config.time.stride();
    if s % 2 == 0 {
        s / 2
    } else {
        1
    }
}

fn compose(
    config: &ScenarioConfig,
    case: CompositionCase,
    bundle: &mut RunBundle,
    clock: &mut Stopwatch,
) -> Result<()> {
    let r = Reference::compute(config, 1.0)?;
    clock.lap("reference");
    let run = composition_run(config, &r, case)?;
    let res = &run.result;
    let (af, a_scale, _, _) = case_fields(case);
    let rho = SeriesSampler::new(&r.fields, SeriesField::Rho);
    // ρ is carried by v, so A's source is driven by the complement v − v_A
    let v = SeriesSampler::new(&r.fields, SeriesField::V);
    let va = SeriesSampler::new(&r.fields, af);
    let complement = LinearCombination::new().term(1.0, &v).term(-a_scale, &va);
    let sources = source_term(&run.a, &rho, r.rho0_fn(), &complement)?;
    clock.lap("composition");

    let scale = res.velocity_scale();
    bundle.checks.push(Check::at_most(
        0,
        "relative_theorem_residual",
        res.max_residual() / scale,
        1e-4,
    ));
    bundle.checks.push(Check::at_most(
        0,
        "jacobian_factorization",
        res.jacobian_factorization_gap(),
        1e-4,
    ));
    bundle.checks.push(Check::at_most(
        0,
        "source_decomposition",
        sources.decomposition_error(),
        1e-3,
    ));
    if case != CompositionCase::Converse {
        // the composed flow is the de Broglie-Bohm flow, which conserves ρ
        let drift = conservation_check(res, &rho)?.max_drift;
        bundle.checks.push(Check::at_most(
            0,
            "composed_conservation_drift",
            drift,
            1e-3,
        ));
    }

    let mut comp = Csv::new(&[
        "case_id", "q_C0", "time", "Q_B", "q_C", "J_B", "J_C", "residual",
    ]);
    for (i, &q0) in res.labels.labels().iter().enumerate() {
        for k in (0..res.time_base.len()).step_by(composed_stride(config)) {
            comp.row([
                case.id().to_string(),
                float(q0),
                float(res.time_base.time(k)),
                float(res.label_curves[k][i]),
                float(res.paths[k][i]),
                float(res.jacobian_b[k][i]),
                float(res.jacobian_c[k][i]),
                float(res.residuals[k][i]),
            ]);
        }
    }
    let mut src = Csv::new(&["congruence_id", "q0", "time", "c", "rho_ratio"]);
    for (i, &q0) in sources.labels.labels().iter().enumerate() {
        for k in (0..sources.time_base.len()).step_by(config.time.stride()) {
            src.row([
                run.a_id.to_string(),
                float(q0),
                float(sources.time_base.time(k)),
                float(sources.source[k][i]),
                float(sources.rho_ratio[k][i]),
            ]);
        }
    }
    bundle.summary.push(format!(
        "case {}: max residual {:.3e}, J_C gap {:.3e}",
        case.id(),
        res.max_residual(),
        res.jacobian_factorization_gap()
    ));
    bundle.files.push(comp.into_file("composition.csv"));
    bundle.files.push(src.into_file("sources.csv"));
    clock.lap("output");
    Ok(())
}

fn interpolate_psi(snap: &WaveSnapshot, xs: &[f64], x: f64) -> Complex64 {
    let re: Vec<f64> = snap.values.iter().map(|z| z.re).collect();
    let im: Vec<f64> = snap.values.iter().map(|z| z.im).collect();
    Complex64::new(cubic_at(xs, &re, x).0, cubic_at(xs, &im, x).0)
}

/// `None` when `x` lies outside a hull at `t`.
fn skip_outside<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::OutsideHull { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn reconstruct(
    config: &ScenarioConfig,
    bundle: &mut RunBundle,
    clock: &mut Stopwatch,
) -> Result<()> {
    let r = Reference::compute(config, 1.0)?;
    clock.lap("reference");
    let (bi, dbb) = driven_trio(config, &r)?;
    clock.lap("congruences");
    let params = config.params();
    let rho_ref = config.thresholds.rho_ref;
    let rho0 = r.rho0_fn();
    let grid = r.fields.grid();
    let xs: Vec<f64> = grid.points().collect();
    let dx = grid.spacing();
    let every = ((r.wave.snapshots.len() - 1) / 10).max(1);

    let mut csv = Csv::new(&[
        "x",
        "t",
        "re_psi_bihj",
        "im_psi_bihj",
        "re_psi_polar",
        "im_psi_polar",
        "re_psi_ref",
        "im_psi_ref",
        "abs_err_bihj",
        "abs_err_polar",
    ]);
    let (mut err_bihj, mut err_polar, mut peak) = (0.0f64, 0.0f64, 0.0f64);
    let mut probes = 0usize;
    for snap in r.wave.snapshots.iter().step_by(every) {
        let t = snap.time;
        let rho = snap.density();
        let mass: f64 = rho.iter().sum::<f64>() * dx;
        let mean = xs.iter().zip(&rho).map(|(x, p)| x * p).sum::<f64>() * dx / mass;
        let var = xs
            .iter()
            .zip(&rho)
            .map(|(x, p)| (x - mean).powi(2) * p)
            .sum::<f64>()
            * dx
            / mass;
        let half = 2.0 * var.sqrt();
        for j in 0..21 {
            let x = mean - half + 2.0 * half * j as f64 / 20.0;
            let (Some(a), Some(b)) = (
                skip_outside(bihj_wavefunction_at(&bi, &params, x, t, rho_ref))?,
                skip_outside(polar_wavefunction_at(&dbb, &rho0, &params, x, t))?,
            ) else {
                continue;
            };
            let c = interpolate_psi(snap, &xs, x);
            let (ea, eb) = ((a - c).norm(), (b - c).norm());
            err_bihj = err_bihj.max(ea);
            err_polar = err_polar.max(eb);
            peak = peak.max(c.norm());
            probes += 1;
            csv.row([x, t, a.re, a.im, b.re, b.im, c.re, c.im, ea, eb].map(float));
        }
    }
    clock.lap("reconstruction");
    bundle
        .checks
        .push(Check::at_least(0, "probes_compared", probes as f64, 1.0));
    bundle.checks.push(Check::at_most(
        0,
        "bihj_relative_error",
        err_bihj / peak,
        1e-3,
    ));
    bundle.checks.push(Check::at_most(
        0,
        "polar_relative_error",
        err_polar / peak,
        1e-3,
    ));
    bundle.summary.push(format!(
        "{probes} probes; max |ψ_bihj − ψ_ref| = {err_bihj:.3e}, max |ψ_polar − ψ_ref| = {err_polar:.3e}"
    ));
    bundle.files.push(csv.into_file("reconstruction.csv"));
    Ok(())
}

fn oracle_table(config: &ScenarioConfig, bundle: &mut RunBundle) -> Result<()> {
    if !config.initial_state.is_gaussian_at_rest() || !config.potential.is_free() {
        return Err(Error::precondition(
            MODULE,
            "closed forms exist only for a free Gaussian at rest",
        ));
    }
    let g = GaussianParams::new(config.initial_state.sigma0(), config.hbar, config.mass)?
        .with_rho_ref(config.thresholds.rho_ref);
    let l = 2f64.sqrt() * g.sigma0;
    let t = 1.0 / g.kappa();
    let arc = (g.kappa() * t).atan();
    let psi = g.psi(0.0, t);
    let density_ratio = g.rho(0.0, 0.0) / g.jacobian(PathKind::Plus, t) / g.rho(0.0, t);
    let rows: Vec<(&str, f64)> = vec![
        ("kappa", g.kappa()),
        ("unit_length", l),
        ("unit_time", t),
        ("q_plus_unit", g.path(PathKind::Plus, l, t)),
        ("q_minus_unit", g.path(PathKind::Minus, l, t)),
        ("q_dbb_unit", g.path(PathKind::Dbb, l, t)),
        ("q_half_plus_unit", g.path(PathKind::HalfPlus, l, t)),
        (
            "label_generator_i_unit",
            g.label_generator(CompositionCase::I, l, t),
        ),
        (
            "label_generator_ii_unit",
            g.label_generator(CompositionCase::Ii, l, t),
        ),
        (
            "label_generator_converse_unit",
            g.label_generator(CompositionCase::Converse, l, t),
        ),
        ("cross_map_minus_label_unit", l * (-2.0 * arc).exp()),
        ("re_psi_origin_unit", psi.re),
        ("im_psi_origin_unit", psi.im),
        ("rho_origin_unit", g.rho(0.0, t)),
        (
            "plus_action_increment_origin_unit",
            g.fields(0.0, t).s_plus - g.fields(0.0, 0.0).s_plus,
        ),
        ("plus_density_ratio_origin_unit", density_ratio),
        (
            "plus_source_origin_unit",
            g.rho(0.0, t) * (1.0 - density_ratio),
        ),
        ("mixture_ratio_origin_unit", arc.cosh()),
        (
            "v_plus_at_unit_length_unit",
            g.sample(OracleField::VPlus, l, t).value,
        ),
    ];
    let mut csv = Csv::new(&["quantity", "value"]);
    for (name, value) in &rows {
        csv.row([name.to_string(), float(*value)]);
        bundle.summary.push(format!("{name:<36} {value:>24.16e}"));
    }
    bundle.files.push(csv.into_file("oracle.csv"));
    Ok(())
}

/// At most `n` evenly spread indices of `0..len`.
fn spread(len: usize, n: usize) -> Vec<usize> {
    if len <= n {
        return (0..len).collect();
    }
    (0..n).map(|j| j * (len - 1) / (n - 1)).collect()
}

fn figure_2(config: &ScenarioConfig, bundle: &mut RunBundle, clock: &mut Stopwatch) -> Result<()> {
    let (forward, backward) = rayon::join(
        || Reference::compute(config, 1.0),
        || Reference::compute(config, -1.0),
    );
    let (forward, backward) = (forward?, backward?);
    clock.lap("reference");
    let count = config.labels.count.min(21);
    let times = solver_times(config);
    let spans = &config.labels;
    let mut csv = Csv::new(&["view", "congruence_id", "q0", "time", "q"]);
    // running backward exchanges the roles of expanding and contracting flows
    let rows: [(&str, &str, SeriesField, SpanRule, SpanRule); 3] = [
        ("dbb", "dbb", SeriesField::V, spans.dbb_span, spans.dbb_span),
        (
            "bihj",
            "plus",
            SeriesField::VPlus,
            spans.plus_span,
            spans.minus_span,
        ),
        (
            "bihj",
            "minus",
            SeriesField::VMinus,
            spans.minus_span,
            spans.plus_span,
        ),
    ];
    let stride = config.time.stride();
    for (view, id, field, forward_span, backward_span) in rows {
        let fwd = integrate_congruence(
            &SeriesSampler::new(&forward.fields, field),
            &forward.labels(forward_span, count)?,
            times,
            None,
        )?;
        let bwd = integrate_congruence(
            &Reversed(SeriesSampler::new(&backward.fields, field)),
            &backward.labels(backward_span, count)?,
            times,
            None,
        )?;
        for (c, sign) in [(&bwd, -1.0), (&fwd, 1.0)] {
            for (i, &q0) in c.labels.labels().iter().enumerate() {
                let frames: Vec<usize> = (0..c.time_base.len()).step_by(stride).collect();
                let ordered: Vec<usize> = if sign < 0.0 {
                    frames.into_iter().rev().filter(|&k| k > 0).collect()
                } else {
                    frames
                };
                for k in ordered {
                    csv.row([
                        view.to_string(),
                        id.to_string(),
                        float(q0),
                        float(sign * c.time_base.time(k)),
                        float(c.positions[k][i]),
                    ]);
                }
            }
        }
    }
    clock.lap("congruences");
    bundle.summary.push(format!("fig2: {} rows", csv.rows()));
    bundle.files.push(csv.into_file("fig2.csv"));
    Ok(())
}

fn figure_3(
    config: &ScenarioConfig,
    case: CompositionCase,
    bundle: &mut RunBundle,
    clock: &mut Stopwatch,
) -> Result<()> {
    let r = Reference::compute(config, 1.0)?;
    clock.lap("reference");
    let run = composition_run(config, &r, case)?;
    clock.lap("composition");
    let res = &run.result;
    let stride = composed_stride(config);
    let mut csv = Csv::new(&["case_id", "series", "q0", "time", "value"]);
    let chosen = spread(res.labels.len(), 5);
    for (series, rows) in [("qC", &res.paths), ("QB", &res.label_curves)] {
        for &i in &chosen {
            for k in (0..res.time_base.len()).step_by(stride) {
                csv.row([
                    case.id().to_string(),
                    series.to_string(),
                    float(res.labels.labels()[i]),
                    float(res.time_base.time(k)),
                    float(rows[k][i]),
                ]);
            }
        }
    }
    let a = &run.a;
    for i in spread(a.labels.len(), 21) {
        for k in (0..a.time_base.len()).step_by(config.time.stride()) {
            csv.row([
                case.id().to_string(),
                "qA_family".to_string(),
                float(a.labels.labels()[i]),
                float(a.time_base.time(k)),
                float(a.positions[k][i]),
            ]);
        }
    }
    bundle
        .summary
        .push(format!("fig3 case {}: {} rows", case.id(), csv.rows()));
    bundle.files.push(csv.into_file("fig3.csv"));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    fn small() -> ScenarioConfig {
        let mut c = ScenarioConfig::gaussian();
        c.grid.n_points = 512;
        c.time = TimeConfig {
            dt_solver: 5e-3,
            dt_fields: 2.5e-2,
            t_final: 0.5,
        };
        c.labels.count = 21;
        c
    }

    #[test]
    fn simulate_lists_files_and_passes() {
        let b = run(Command::Simulate, &small(), RunOptions::default()).unwrap();
        let names: Vec<&str> = b.files.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["fields.csv", "trajectories.csv"]);
        assert!(b.passed(), "{:?}", b.checks);
        let manifest: serde_json::Value =
            serde_json::from_slice(&b.manifest().unwrap().bytes).unwrap();
        assert_eq!(manifest["files"].as_array().unwrap().len(), 2);
        assert_eq!(manifest["files"][0]["bytes"], b.files[0].bytes.len());

        let mut cfg = small();
        cfg.reference_fields = true;
        let b = run(Command::Simulate, &cfg, RunOptions::default()).unwrap();
        let raw = b
            .files
            .iter()
            .find(|f| f.name == "reference_fields.csv")
            .unwrap();
        let text = std::str::from_utf8(&raw.bytes).unwrap();
        assert!(text.starts_with("time,x,re_psi,im_psi\n"));
        let fields = std::str::from_utf8(&b.files[0].bytes).unwrap();
        assert_eq!(text.lines().count(), fields.lines().count());
        let header = std::str::from_utf8(&b.files[1].bytes)
            .unwrap()
            .lines()
            .next()
            .unwrap();
        assert_eq!(header, "congruence_id,label_index,q0,time,q,qdot,J,chi");
    }

    #[test]
    fn autonomous_simulate_emits_crossmap() {
        let mut c = small();
        c.mode = Mode::Autonomous;
        c.autonomous.t_final = 0.2;
        c.autonomous.dt = 1e-3;
        c.autonomous.stride = 20;
        c.autonomous.label_count = 41;
        let b = run(Command::Simulate, &c, RunOptions::default()).unwrap();
        let names: Vec<&str> = b.files.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["trajectories.csv", "crossmap.csv"]);
        let text = std::str::from_utf8(&b.files[1].bytes).unwrap();
        assert!(text.starts_with("time,q_plus0,q_minus0\n"));
        assert!(text.lines().count() > 41);
    }

    #[test]
    fn compose_every_case() {
        let mut cfg = ScenarioConfig::gaussian();
        cfg.time.t_final = 0.5;
        for case in [
            CompositionCase::I,
            CompositionCase::Ii,
            CompositionCase::Converse,
        ] {
            let b = run(
                Command::Compose,
                &cfg,
                RunOptions {
                    case: Some(case),
                    figure: None,
                },
            )
            .unwrap();
            assert!(b.passed(), "{case:?}: {:?}", b.checks);
            assert_eq!(b.files.len(), 2);
        }
    }

    #[test]
    fn reconstruct_agrees_with_reference() {
        let b = run(Command::Reconstruct, &small(), RunOptions::default()).unwrap();
        assert!(b.passed(), "{:?}", b.checks);
    }

    #[test]
    fn figures() {
        let f3 = run(
            Command::Figure,
            &small(),
            RunOptions {
                case: None,
                figure: Some(FigureId::Fig3),
            },
        )
        .unwrap();
        let text = std::str::from_utf8(&f3.files[0].bytes).unwrap();
        assert!(text.starts_with("case_id,series,q0,time,value\n"));
        for s in [",qC,", ",QB,", ",qA_family,"] {
            assert!(text.contains(s));
        }
        let f2 = run(
            Command::Figure,
            &small(),
            RunOptions {
                case: None,
                figure: Some(FigureId::Fig2),
            },
        )
        .unwrap();
        let text = std::str::from_utf8(&f2.files[0].bytes).unwrap();
        assert!(text.contains(",-5.0000000000000000e-1,"));
        assert!(run(Command::Figure, &small(), RunOptions::default()).is_err());
    }

    #[test]
    fn oracle_table_values() {
        let b = run(
            Command::Oracle,
            &ScenarioConfig::gaussian(),
            RunOptions::default(),
        )
        .unwrap();
        let text = std::str::from_utf8(&b.files[0].bytes).unwrap();
        let row = text.lines().find(|l| l.starts_with("q_dbb_unit,")).unwrap();
        let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
        assert!(b.checks.is_empty() && b.passed());
    }

    #[test]
    fn invalid_config_is_rejected_before_work() {
        let mut c = small();
        c.grid.n_points = 8;
        let err = run(Command::Simulate, &c, RunOptions::default()).unwrap_err();
        assert!(err.to_string().contains("n_points >= 16"));
    }
}
