use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure kinds shared by every stage of the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("invalid direction: {0}")]
    InvalidDirection(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bad magic bytes: not an MLF1 field file")]
    BadMagic,
    #[error("truncated field file: {0}")]
    Truncated(String),
    #[error("payload size mismatch: header declares {expected} bytes, payload has {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("malformed wavefront CSV: {0}")]
    BadCsv(String),

    #[error("phantom geometry does not fit inside the grid margin: {0}")]
    GeometryOverflow(String),
    #[error("field has empty support")]
    EmptySupport,
    #[error("invalid support bound: {0}")]
    InvalidSupportBound(String),
    #[error("shear moves support outside the grid: {0}")]
    ShearOverflow(String),
    #[error("curve re-enters the support up to t_probe_max = {0}")]
    HorizonNotFound(f64),
    #[error("memory budget exceeded: need {required} bytes, budget is {budget}")]
    MemoryBudget { required: u64, budget: u64 },

    #[error("quadrature did not converge: error estimate {achieved:e} above tolerance {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },
    #[error("non-finite value produced in {0}")]
    NonFinite(String),

    #[error("window clipped by grid boundary at {0:?}")]
    WindowClipped(Vec<f64>),
    #[error("cone has no lattice frequencies: {0}")]
    EmptyCone(String),
    #[error("wavefront sets use different discretizations: {0}")]
    MismatchedDiscretization(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures produced by computation rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Quadrature { .. } | Error::NonFinite(_))
    }
}
