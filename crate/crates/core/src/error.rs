use thiserror::Error;

/// Errors raised by the solvers, simulators and front-end.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("volatility is non-positive ({sigma}) at t={t}, x={x}")]
    NonPositiveSigma { t: f64, x: f64, sigma: f64 },

    #[error("correlation {0} outside (-1, 1)")]
    CorrelationOutOfRange(f64),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid preference: {0}")]
    InvalidPreference(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("model validation failed: {0}")]
    ValidationFailed(String),

    #[error("temperature is non-positive ({lambda}) at t={t}, x={x}")]
    TemperatureNonPositive { t: f64, x: f64, lambda: f64 },

    #[error("Picard iteration did not converge at t={t} (residual {residual:.3e} after {iterations} iterations)")]
    PicardDivergence { t: f64, residual: f64, iterations: usize },

    #[error("non-finite value in field at t={t}, x={x}")]
    NonFiniteField { t: f64, x: f64 },

    #[error("convergence probe needs at least 3 grids, got {0}")]
    InsufficientGrids(usize),

    #[error("grid sequence is not a uniform refinement: {0}")]
    NotARefinement(String),

    #[error("point (t={t}, x={x}) lies outside the grid")]
    OutOfDomain { t: f64, x: f64 },

    #[error("policy has zero variance where entropy is required (t={t}, x={x})")]
    DegeneratePolicy { t: f64, x: f64 },

    #[error("non-finite simulated path {path} at step {step}")]
    NonFinitePath { path: usize, step: usize },

    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),

    #[error("degenerate data for order estimate: {0}")]
    DegenerateData(String),

    #[error("gamma {0} outside (0, 1)")]
    GammaOutOfRange(f64),

    #[error("explosion premise violated: {0}")]
    ConditionViolated(String),

    #[error("ODE step size underflow at tau={tau}, phi={phi}")]
    StepSizeUnderflow { tau: f64, phi: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("prerequisite run `{0}` failed")]
    PrerequisiteFailed(String),

    #[error("acceptance criteria failed: {0}")]
    CriteriaFailed(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
