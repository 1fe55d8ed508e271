use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("{module}: precondition failed: {message}")]
    Precondition {
        module: &'static str,
        message: String,
    },

    #[error(
        "reference: boundary density is {ratio:.3e} of peak; the grid must cover at least [{required_min:.4}, {required_max:.4}]"
    )]
    DomainTooNarrow {
        ratio: f64,
        required_min: f64,
        required_max: f64,
    },

    #[error("reference: boundary density reached {ratio:.3e} of peak at t = {time}")]
    BoundaryBreach { time: f64, ratio: f64 },

    #[error("{module}: numerical instability at t = {time}: {detail}")]
    Instability {
        module: &'static str,
        time: f64,
        detail: String,
    },

    #[error("reference: analytic series is only available for a Gaussian at rest in free space")]
    UnsupportedAnalytic,

    #[error("fields: no grid point reaches the density threshold {rho_min:.3e}")]
    DegenerateState { rho_min: f64 },

    #[error("fields: phase jump of {jump:.4} rad between x = {x_left} and x = {x_right}; refine the grid")]
    UnwrapFailure {
        x_left: f64,
        x_right: f64,
        jump: f64,
    },

    #[error("{module}: trajectory with label {label} left the valid region at t = {time}")]
    Truncation {
        module: &'static str,
        label: f64,
        time: f64,
    },

    #[error("{module}: focal point, J = {jacobian:.3e} for label {label} at t = {time}")]
    FocalPoint {
        module: &'static str,
        label: f64,
        time: f64,
        jacobian: f64,
    },

    #[error("{module}: trajectories crossed near label {label} at t = {time}")]
    Crossing {
        module: &'static str,
        label: f64,
        time: f64,
    },

    #[error("{module}: x = {x} lies outside the congruence hull [{lo}, {hi}] at t = {time}")]
    OutsideHull {
        module: &'static str,
        x: f64,
        time: f64,
        lo: f64,
        hi: f64,
    },

    #[error("autonomous: the ± congruence hulls no longer overlap at t = {time}")]
    OverlapLost { time: f64 },

    #[error("compose: near-singular label map, J_A = {jacobian:.3e} at label {label}, t = {time}")]
    NearSingular {
        label: f64,
        time: f64,
        jacobian: f64,
    },

    #[error(
        "compose: label generator for q_C0 = {label} reached {reached} at t = {time}, outside A's labels [{lo}, {hi}]; widen A's label set"
    )]
    SpanExhausted {
        label: f64,
        time: f64,
        reached: f64,
        lo: f64,
        hi: f64,
    },

    #[error("sampler: ({x}, {t}) lies outside the valid region")]
    OutsideValid { x: f64, t: f64 },

    #[error("sampler: t = {t} outside the time span [{start}, {end}]")]
    OutsideTime { t: f64, start: f64, end: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn precondition(module: &'static str, message: impl Into<String>) -> Self {
        Error::Precondition {
            module,
            message: message.into(),
        }
    }
}
