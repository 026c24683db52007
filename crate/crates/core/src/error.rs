use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown preset `{0}` (expected grw_micro or grw_macro)")]
    UnknownPreset(String),

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("position {x:e} cm is outside the supported window [{lo:e}, {hi:e}] cm")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("tracer displaced {displacement:e} cm from its start, beyond the locality limit {limit:e} cm")]
    LocalityViolated { displacement: f64, limit: f64 },

    #[error("integrator mismatch: {0}")]
    SchemeMismatch(String),

    #[error("time step rejected: {0}")]
    StepRejected(String),

    #[error("lattice too small: {0}")]
    LatticeTooSmall(String),

    #[error("non-positive field value {value:e} at grid index {index}")]
    NonPositive { index: usize, value: f64 },

    #[error("fit window error: {0}")]
    FitWindow(String),

    #[error("grid too coarse: circulant spectrum has negative eigenvalue {0:e}")]
    NegativeSpectrum(f64),

    #[error("series mismatch: {0}")]
    SeriesMismatch(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
