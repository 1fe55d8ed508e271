//! Reference wavefunction series: initial states, Crank-Nicolson propagation
//! with Dirichlet walls, and the closed-form free Gaussian.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::GaussianParams;
use crate::params::{PhysicalParams, SpatialGrid, TimeBase};

/// Density at the walls, relative to the peak, that an initial state may have.
pub const INITIAL_BOUNDARY_RATIO: f64 = 1e-12;
/// Density at the walls, relative to the peak, tolerated during propagation.
pub const RUNNING_BOUNDARY_RATIO: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialStateSpec {
    Gaussian {
        sigma0: f64,
        #[serde(default)]
        center: f64,
        #[serde(default)]
        momentum: f64,
    },
    /// `√w g(x + d/2) + √(1−w) e^{iφ} g(x − d/2)` with `g` a normalized
    /// Gaussian of width `σ0` at rest.
    TwoGaussian {
        sigma0: f64,
        separation: f64,
        relative_phase: f64,
        relative_weight: f64,
    },
}

impl InitialStateSpec {
    pub fn gaussian_at_rest(sigma0: f64) -> Self {
        InitialStateSpec::Gaussian {
            sigma0,
            center: 0.0,
            momentum: 0.0,
        }
    }

    pub fn sigma0(&self) -> f64 {
        match *self {
            InitialStateSpec::Gaussian { sigma0, .. }
            | InitialStateSpec::TwoGaussian { sigma0, .. } => sigma0,
        }
    }

    pub fn is_gaussian_at_rest(&self) -> bool {
        matches!(*self, InitialStateSpec::Gaussian { center, momentum, .. } if center == 0.0 && momentum == 0.0)
    }

    pub fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.sigma0() > 0.0) {
            problems.push(format!("sigma0 must be > 0 (got {})", self.sigma0()));
        }
        if let InitialStateSpec::TwoGaussian {
            separation,
            relative_phase,
            relative_weight,
            ..
        } = *self
        {
            if !(0.0..=1.0).contains(&relative_weight) {
                problems.push(format!(
                    "relative_weight must lie in [0, 1] (got {relative_weight})"
                ));
            }
            if !separation.is_finite() || !relative_phase.is_finite() {
                problems.push("separation and relative_phase must be finite".into());
            }
        }
        problems
    }

    /// Centres of the components.
    fn centres(&self) -> Vec<f64> {
        match *self {
            InitialStateSpec::Gaussian { center, .. } => vec![center],
            InitialStateSpec::TwoGaussian { separation, .. } => {
                vec![-0.5 * separation, 0.5 * separation]
            }
        }
    }

    fn amplitude(&self, x: f64, hbar: f64) -> Complex64 {
        let g = |sigma0: f64, c: f64| {
            let norm = (2.0 * std::f64::consts::PI * sigma0 * sigma0).powf(-0.25);
            norm * (-(x - c) * (x - c) / (4.0 * sigma0 * sigma0)).exp()
        };
        match *self {
            InitialStateSpec::Gaussian {
                sigma0,
                center,
                momentum,
            } => Complex64::from_polar(g(sigma0, center), momentum * x / hbar),
            InitialStateSpec::TwoGaussian {
                sigma0,
                separation,
                relative_phase,
                relative_weight,
            } => {
                let a = relative_weight.sqrt() * g(sigma0, -0.5 * separation);
                let b = (1.0 - relative_weight).sqrt() * g(sigma0, 0.5 * separation);
                Complex64::new(a, 0.0) + Complex64::from_polar(b, relative_phase)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveSnapshot {
    pub grid: SpatialGrid,
    pub time: f64,
    pub values: Vec<Complex64>,
}

impl WaveSnapshot {
    /// Discrete `Σ|ψ|² Δx`.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.spacing()
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn conjugate(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.conj()).collect(),
            ..self.clone()
        }
    }

    /// Wall density over peak density.
    pub fn boundary_ratio(&self) -> f64 {
        let rho = self.density();
        let peak = rho.iter().cloned().fold(0.0, f64::max);
        let n = rho.len();
        rho[0].max(rho[n - 1]).max(rho[1]).max(rho[n - 2]) / peak
    }

    /// Discrete L2 distance `(Σ|ψ − φ|² Δx)^(1/2)`.
    pub fn l2_distance(&self, other: &WaveSnapshot) -> f64 {
        (self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * self.grid.spacing())
        .sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct WaveSeries {
    pub params: PhysicalParams,
    pub grid: SpatialGrid,
    pub time_base: TimeBase,
    pub snapshots: Vec<WaveSnapshot>,
}

impl WaveSeries {
    pub fn last(&self) -> &WaveSnapshot {
        self.snapshots.last().expect("series is never empty")
    }

    pub fn at_time(&self, t: f64) -> Option<&WaveSnapshot> {
        self.time_base.index_of(t).map(|k| &self.snapshots[k])
    }
}

/// Normalized initial wavefunction on `grid`.
pub fn build_initial_state(
    spec: &InitialStateSpec,
    grid: &SpatialGrid,
    params: &PhysicalParams,
) -> Result<WaveSnapshot> {
    let mut problems = spec.problems();
    problems.extend(grid.problems());
    problems.extend(params.problems());
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let mut values: Vec<Complex64> = grid
        .points()
        .map(|x| spec.amplitude(x, params.hbar))
        .collect();
    let mut snap = WaveSnapshot {
        grid: *grid,
        time: 0.0,
        values: std::mem::take(&mut values),
    };
    let rho = snap.density();
    let peak = rho.iter().cloned().fold(0.0, f64::max);
    let ratio = rho[0].max(rho[rho.len() - 1]) / peak;
    if !(ratio < INITIAL_BOUNDARY_RATIO) {
        let reach = spec.sigma0() * (2.0 * (1.0 / INITIAL_BOUNDARY_RATIO).ln()).sqrt();
        let centres = spec.centres();
        let lo = centres.iter().cloned().fold(f64::INFINITY, f64::min) - reach;
        let hi = centres.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + reach;
        return Err(Error::DomainTooNarrow {
            ratio,
            required_min: lo,
            required_max: hi,
        });
    }
    let scale = snap.norm().sqrt().recip();
    for v in &mut snap.values {
        *v *= scale;
    }
    Ok(snap)
}

/// Crank-Nicolson propagator `(1 + iHΔt/2ħ) ψⁿ⁺¹ = (1 − iHΔt/2ħ) ψⁿ` with the
/// three-point Laplacian and `ψ = 0` at both walls. The left-hand matrix is
/// constant, so its Thomas elimination factors are computed once.
#[derive(Clone, Debug)]
pub struct CrankNicolson {
    dt: f64,
    /// Diagonal of `1 − iHΔt/2ħ` on interior points.
    rhs_diag: Vec<Complex64>,
    rhs_off: Complex64,
    lhs_off: Complex64,
    /// Modified super-diagonal `c'` of the forward sweep.
    c_prime: Vec<Complex64>,
    /// `1 / (b_i − a c'_{i−1})`.
    inv_pivot: Vec<Complex64>,
}

impl CrankNicolson {
    pub fn new(grid: &SpatialGrid, params: &PhysicalParams, dt: f64) -> Self {
        let h = grid.spacing();
        let kinetic = params.hbar * params.hbar / (params.mass * h * h);
        let alpha = Complex64::new(0.0, dt / (2.0 * params.hbar));
        let interior = grid.n_points - 2;
        let lhs_off = alpha * (-0.5 * kinetic);
        let rhs_off = -lhs_off;
        let mut rhs_diag = Vec::with_capacity(interior);
        let mut lhs_diag = Vec::with_capacity(interior);
        for i in 1..=interior {
            let hd = kinetic + params.potential_at(grid.x(i));
            lhs_diag.push(Complex64::new(1.0, 0.0) + alpha * hd);
            rhs_diag.push(Complex64::new(1.0, 0.0) - alpha * hd);
        }
        let mut c_prime = vec![Complex64::new(0.0, 0.0); interior];
        let mut inv_pivot = vec![Complex64::new(0.0, 0.0); interior];
        inv_pivot[0] = lhs_diag[0].inv();
        c_prime[0] = lhs_off * inv_pivot[0];
        for i in 1..interior {
            inv_pivot[i] = (lhs_diag[i] - lhs_off * c_prime[i - 1]).inv();
            c_prime[i] = lhs_off * inv_pivot[i];
        }
        Self {
            dt,
            rhs_diag,
            rhs_off,
            lhs_off,
            c_prime,
            inv_pivot,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `psi` (all grid points, walls included) by one step.
    pub fn step(&self, psi: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        let interior = self.rhs_diag.len();
        scratch.clear();
        scratch.resize(interior, Complex64::new(0.0, 0.0));
        // right-hand side, then forward sweep in place
        for i in 0..interior {
            let p = i + 1;
            let d = self.rhs_diag[i] * psi[p] + self.rhs_off * (psi[p - 1] + psi[p + 1]);
            scratch[i] = if i == 0 {
                d * self.inv_pivot[0]
            } else {
                (d - self.lhs_off * scratch[i - 1]) * self.inv_pivot[i]
            };
        }
        for i in (0..interior - 1).rev() {
            let next = scratch[i + 1];
            scratch[i] -= self.c_prime[i] * next;
        }
        psi[0] = Complex64::new(0.0, 0.0);
        psi[interior + 1] = Complex64::new(0.0, 0.0);
        psi[1..=interior].copy_from_slice(scratch);
    }
}

/// Crank-Nicolson series with every step recorded.
pub fn evolve_crank_nicolson(
    initial: &WaveSnapshot,
    params: &PhysicalParams,
    dt: f64,
    steps: usize,
) -> Result<WaveSeries> {
    evolve_crank_nicolson_strided(initial, params, dt, steps, 1)
}

/// Crank-Nicolson series recording every `stride`-th step. A negative `dt`
/// propagates backward in time.
pub fn evolve_crank_nicolson_strided(
    initial: &WaveSnapshot,
    params: &PhysicalParams,
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<WaveSeries> {
    const MODULE: &str = "reference";
    params.validate()?;
    if !(dt.is_finite() && dt != 0.0) {
        return Err(Error::precondition(
            MODULE,
            format!("time step must be finite and non-zero (got {dt})"),
        ));
    }
    if steps == 0 {
        return Err(Error::precondition(MODULE, "steps must be >= 1"));
    }
    if stride == 0 || steps % stride != 0 {
        return Err(Error::precondition(
            MODULE,
            format!("stride {stride} must divide steps {steps}"),
        ));
    }
    let grid = initial.grid;
    let ratio = initial.boundary_ratio();
    if !(ratio < RUNNING_BOUNDARY_RATIO) {
        return Err(Error::BoundaryBreach {
            time: initial.time,
            ratio,
        });
    }
    let propagator = CrankNicolson::new(&grid, params, dt);
    let mut psi = initial.values.clone();
    let n = psi.len();
    psi[0] = Complex64::new(0.0, 0.0);
    psi[n - 1] = Complex64::new(0.0, 0.0);
    let time_base = TimeBase::new(initial.time, dt, steps).strided(stride);
    let mut snapshots = Vec::with_capacity(time_base.len());
    snapshots.push(WaveSnapshot {
        grid,
        time: initial.time,
        values: psi.clone(),
    });
    let mut scratch = Vec::with_capacity(n);
    for k in 1..=steps {
        propagator.step(&mut psi, &mut scratch);
        let time = initial.time + k as f64 * dt;
        let mut peak = 0.0f64;
        for v in &psi {
            let r = v.norm_sqr();
            if !r.is_finite() {
                return Err(Error::Instability {
                    module: MODULE,
                    time,
                    detail: "non-finite amplitude".into(),
                });
            }
            peak = peak.max(r);
        }
        let wall = psi[1].norm_sqr().max(psi[n - 2].norm_sqr());
        if wall > RUNNING_BOUNDARY_RATIO * peak {
            return Err(Error::BoundaryBreach {
                time,
                ratio: wall / peak,
            });
        }
        if k % stride == 0 {
            snapshots.push(WaveSnapshot {
                grid,
                time,
                values: psi.clone(),
            });
        }
    }
    Ok(WaveSeries {
        params: params.clone(),
        grid,
        time_base,
        snapshots,
    })
}

/// Closed-form series `√ρ e^{iS/ħ}` for a Gaussian at rest in free space.
pub fn analytic_series(
    spec: &InitialStateSpec,
    grid: &SpatialGrid,
    params: &PhysicalParams,
    times: TimeBase,
) -> Result<WaveSeries> {
    if !spec.is_gaussian_at_rest() || !params.potential.is_free() {
        return Err(Error::UnsupportedAnalytic);
    }
    let oracle = GaussianParams::new(spec.sigma0(), params.hbar, params.mass)?;
    let snapshots = times
        .times()
        .map(|t| WaveSnapshot {
            grid: *grid,
            time: t,
            values: grid.points().map(|x| oracle.psi(x, t)).collect(),
        })
        .collect();
    Ok(WaveSeries {
        params: params.clone(),
        grid: *grid,
        time_base: times,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Potential;
    use std::f64::consts::PI;

    fn grid() -> SpatialGrid {
        SpatialGrid::new(-10.0, 10.0, 2048).unwrap()
    }

    fn spec() -> InitialStateSpec {
        InitialStateSpec::gaussian_at_rest(0.5f64.sqrt())
    }

    #[test]
    fn initial_gaussian_peak_and_norm() {
        let g = grid();
        let snap = build_initial_state(&spec(), &g, &PhysicalParams::natural()).unwrap();
        assert!((snap.norm() - 1.0).abs() < 1e-6);
        // largest density sits next to x = 0 (even point count); compare with
        // the closed form at that point
        let (i, rho) = snap
            .density()
            .into_iter()
            .enumerate()
            .fold((0, 0.0), |a, (i, r)| if r > a.1 { (i, r) } else { a });
        let x = g.x(i);
        let expected = (2.0 * PI * 0.5f64).powf(-0.5) * (-x * x).exp();
        assert!((rho - expected).abs() < 1e-9);
        assert!((expected - 0.564190).abs() < 1e-4);
        assert!(snap.values.iter().all(|v| v.im == 0.0 && v.re > 0.0));
    }

    #[test]
    fn degenerate_two_gaussian_is_single_gaussian() {
        let g = grid();
        let p = PhysicalParams::natural();
        let two = InitialStateSpec::TwoGaussian {
            sigma0: 0.7,
            separation: 3.0,
            relative_phase: 1.1,
            relative_weight: 1.0,
        };
        let one = InitialStateSpec::Gaussian {
            sigma0: 0.7,
            center: -1.5,
            momentum: 0.0,
        };
        let a = build_initial_state(&two, &g, &p).unwrap();
        let b = build_initial_state(&one, &g, &p).unwrap();
        assert!(a.l2_distance(&b) < 1e-14);
    }

    #[test]
    fn narrow_domain_names_required_width() {
        let g = SpatialGrid::new(-2.0, 2.0, 64).unwrap();
        let err = build_initial_state(&spec(), &g, &PhysicalParams::natural()).unwrap_err();
        match err {
            Error::DomainTooNarrow {
                required_min,
                required_max,
                ..
            } => {
                assert!((required_max - 0.5f64.sqrt() * (2.0 * 1e12f64.ln()).sqrt()).abs() < 1e-12);
                assert_eq!(required_min, -required_max);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn zero_steps_rejected() {
        let g = grid();
        let p = PhysicalParams::natural();
        let snap = build_initial_state(&spec(), &g, &p).unwrap();
        assert!(matches!(
            evolve_crank_nicolson(&snap, &p, 1e-3, 0),
            Err(Error::Precondition { .. })
        ));
    }

    #[test]
    fn crank_nicolson_matches_analytic_gaussian() {
        let g = grid();
        let p = PhysicalParams::natural();
        let snap = build_initial_state(&spec(), &g, &p).unwrap();
        let cn = evolve_crank_nicolson_strided(&snap, &p, 1e-3, 1000, 1000).unwrap();
        let exact = analytic_series(&spec(), &g, &p, TimeBase::new(1.0, 1.0, 0)).unwrap();
        let err = cn.last().l2_distance(&exact.snapshots[0]);
        assert!(err <= 1e-4, "L2 error {err}");
        assert!((cn.last().time - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crank_nicolson_conserves_norm() {
        let g = SpatialGrid::new(-10.0, 10.0, 512).unwrap();
        let p = PhysicalParams {
            hbar: 1.0,
            mass: 1.0,
            potential: Potential::Harmonic { omega: 0.8 },
        };
        let two = InitialStateSpec::TwoGaussian {
            sigma0: 0.7,
            separation: 2.0,
            relative_phase: 0.4,
            relative_weight: 0.3,
        };
        let snap = build_initial_state(&two, &g, &p).unwrap();
        let series = evolve_crank_nicolson_strided(&snap, &p, 1e-3, 10_000, 1000).unwrap();
        let drift = series
            .snapshots
            .iter()
            .map(|s| (s.norm() - snap.norm()).abs())
            .fold(0.0, f64::max);
        assert!(drift <= 1e-8, "norm drift {drift}");
    }

    #[test]
    fn backward_step_undoes_forward_step() {
        let g = SpatialGrid::new(-8.0, 8.0, 256).unwrap();
        let p = PhysicalParams::natural();
        let snap = build_initial_state(
            &InitialStateSpec::Gaussian {
                sigma0: 0.8,
                center: 0.5,
                momentum: 1.0,
            },
            &g,
            &p,
        )
        .unwrap();
        let fwd = evolve_crank_nicolson(&snap, &p, 1e-2, 10).unwrap();
        let back = evolve_crank_nicolson(fwd.last(), &p, -1e-2, 10).unwrap();
        assert!(back.last().l2_distance(&fwd.snapshots[0]) < 1e-12);
    }

    #[test]
    fn boundary_breach_reports_time() {
        let g = SpatialGrid::new(-3.0, 3.0, 256).unwrap();
        let p = PhysicalParams::natural();
        let snap = build_initial_state(&InitialStateSpec::gaussian_at_rest(0.35), &g, &p).unwrap();
        match evolve_crank_nicolson(&snap, &p, 1e-2, 500) {
            Err(Error::BoundaryBreach { time, .. }) => assert!(time > 0.0 && time < 5.0),
            other => panic!("expected breach, got {other:?}"),
        }
    }

    #[test]
    fn analytic_series_rejects_moving_packet() {
        let moving = InitialStateSpec::Gaussian {
            sigma0: 1.0,
            center: 0.0,
            momentum: 1.0,
        };
        assert!(matches!(
            analytic_series(
                &moving,
                &grid(),
                &PhysicalParams::natural(),
                TimeBase::from_zero(0.1, 2)
            ),
            Err(Error::UnsupportedAnalytic)
        ));
    }

    #[test]
    fn analytic_series_value_at_origin() {
        let g = SpatialGrid::new(-1.0, 1.0, 21).unwrap();
        let s = analytic_series(
            &spec(),
            &g,
            &PhysicalParams::natural(),
            TimeBase::from_zero(0.5, 2),
        )
        .unwrap();
        let psi = s.snapshots[2].values[10];
        assert!((psi.re - 0.58354).abs() < 1e-5 && (psi.im + 0.24171).abs() < 1e-5);
        assert!(s.snapshots[0]
            .values
            .iter()
            .all(|v| v.im.abs() < 1e-300 && v.re > 0.0));
    }
}
