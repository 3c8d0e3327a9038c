use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("flow {q} m3/h outside [{min}, {max}]")]
    FlowOutOfBounds { q: f64, min: f64, max: f64 },

    #[error("heat exchanger inactive in storing mode (q = 0)")]
    HxInactive,

    #[error("shift {shift} out of range for {len} samples")]
    ShiftOutOfRange { shift: i64, len: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("insufficient excitation: smallest/largest singular value ratio {ratio:.3e}")]
    InsufficientExcitation { ratio: f64 },

    #[error("QP primal infeasible")]
    PrimalInfeasible,

    #[error("malformed QP: {0}")]
    MalformedQp(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("data format error: {0}")]
    Format(String),
}

impl Error {
    /// True for errors caused by the numerics rather than by inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InsufficientExcitation { .. } | Error::PrimalInfeasible | Error::NonFinite(_)
        )
    }
}
