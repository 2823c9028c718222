use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("gamma function pole at x = {0}")]
    GammaPole(f64),

    #[error("certificate failure in {what}: residual {residual:e} exceeds tolerance {tolerance:e}")]
    Certificate {
        what: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("non-finite sample on line {line}")]
    NonFiniteSample { line: usize },

    #[error("tail model: {0}")]
    TailModel(String),

    #[error("region outside sampled domain: {0}")]
    OutsideDomain(String),

    #[error("evaluation at a singular sample: {0}")]
    SingularSample(String),

    #[error("test function must have a zero tail")]
    NonzeroTail,

    #[error("support violation: {0}")]
    Support(String),

    #[error("calibration spread {spread:e} exceeds {tolerance:e}")]
    Calibration { spread: f64, tolerance: f64 },

    #[error("scale {scale} is below the resolvable limit {limit}")]
    ScaleUnderflow { scale: f64, limit: f64 },

    #[error("radius violation: {0}")]
    Radius(String),

    #[error("temporal cutoff must equal one on a neighbourhood of t = 0")]
    CutoffNotFlat,

    #[error("non-integrable input: {0}")]
    Overflow(String),

    #[error("empty scale list")]
    EmptyScales,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("extrapolation did not converge: spread {spread:e}")]
    Extrapolation { spread: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Tolerance and certificate failures are distinguished from input
    /// validation failures by the command-line exit status.
    pub fn is_tolerance_failure(&self) -> bool {
        matches!(
            self,
            Error::Certificate { .. } | Error::Calibration { .. } | Error::Extrapolation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
