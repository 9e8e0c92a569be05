use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside the range a solver accepts.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A FENE configuration left the open ball of radius √b.
    #[error("configuration outside the FENE ball: |X|² = {norm_sq} ≥ b = {b}")]
    DomainViolation { norm_sq: f64, b: f64 },

    #[error("dumbbell step failed in cell {cell}, replica {replica} at step {step}: {retries} redraws rejected")]
    StepFailure {
        cell: usize,
        replica: usize,
        step: u64,
        retries: usize,
    },

    /// FENE-P closure evaluated with tr A ≥ b.
    #[error("FENE-P closure requires tr A < b (tr A = {trace}, b = {b})")]
    ClosureDomain { trace: f64, b: f64 },

    #[error("tensor is not symmetric positive definite (smallest eigenvalue {min_eigenvalue})")]
    NotSpd { min_eigenvalue: f64 },

    #[error("time integration failed at t = {time}: {reason}")]
    IntegratorFailure { time: f64, reason: String },

    #[error("time step {dt} exceeds the stability bound {bound}")]
    StabilityBound { dt: f64, bound: f64 },

    #[error("no stationary state: {0}")]
    NoStationaryState(String),

    #[error("density is positive where the reference density vanishes (cell {cell})")]
    SupportViolation { cell: usize },

    #[error("outside the regime of validity: {0}")]
    OutOfRegime(String),

    #[error("control variate has zero empirical variance")]
    DegenerateControl,

    #[error("trial parameter set is empty")]
    EmptyTrialSet,

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
