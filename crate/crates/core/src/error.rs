use thiserror::Error;

/// Errors raised by the solvers and measure utilities.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MfgError {
    #[error("measure is empty")]
    EmptyMeasure,
    #[error("measure is not normalized: total mass {0}")]
    Unnormalized(f64),
    #[error("negative or non-finite weight {0}")]
    BadWeight(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("ragged input: {0}")]
    Ragged(String),
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("support of {atoms} atoms exceeds the exact transport cap {cap}")]
    SupportCap { atoms: usize, cap: usize },
    #[error("stability bound violated: dt * (a/dx^2 + |b|/dx) = {ratio:.6} > 0.5")]
    Stability { ratio: f64 },
    #[error("initial law puts mass {0:e} outside the spatial grid")]
    Truncation(f64),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("kernel denominator vanished at x = {0}; widen delta")]
    VanishingDenominator(f64),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("candidate is not a control rule: residual {residual:e} > {tolerance:e}")]
    NotAControlRule { residual: f64, tolerance: f64 },
    #[error("insufficient repetitions: {0}")]
    InsufficientRepetitions(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("missing input: {0}")]
    MissingInput(String),
}

impl From<std::io::Error> for MfgError {
    fn from(e: std::io::Error) -> Self {
        MfgError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MfgError>;
