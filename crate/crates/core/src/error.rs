use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChnsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value in field")]
    NonFinite,

    #[error("field has nonzero mean {0:e}")]
    NonzeroMean(f64),

    #[error("velocity field is not divergence-free (||div u|| = {0:e})")]
    NotSolenoidal(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("blow-up at t = {t}: {what} = {value:e}")]
    BlowUp { t: f64, what: &'static str, value: f64 },

    #[error("degenerate time window [{tau}, {end}]")]
    DegenerateWindow { tau: f64, end: f64 },

    #[error("invalid control signal: {0}")]
    InvalidControl(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ChnsError {
    pub(crate) fn mismatch(expected: impl std::fmt::Debug, got: impl std::fmt::Debug) -> Self {
        ChnsError::DimensionMismatch {
            expected: format!("{expected:?}"),
            got: format!("{got:?}"),
        }
    }
}

pub type Result<T> = std::result::Result<T, ChnsError>;
