use std::path::PathBuf;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unbounded moment: E[t^L] is infinite for unsmoothed (infinite) L")]
    UnboundedMoment,

    #[error("smoothing too aggressive for bias bound: q = {q} exceeds 2/(2+t) = {limit}")]
    SmoothingTooAggressive { q: f64, limit: f64 },

    #[error("coefficient overflow at index {index}")]
    CoefficientOverflow { index: u64 },

    #[error("smoothing undefined at t <= 1 (t = {t}); use GT")]
    SmoothingUndefined { t: f64 },

    #[error("model/population mismatch: {0}")]
    ModelMismatch(String),

    #[error("sample of size {requested} exceeds available {available}")]
    SampleTooLarge { requested: u64, available: u64 },

    #[error("all-singletons: coverage undefined")]
    DegenerateCoverage,

    #[error("series did not converge within {terms} terms")]
    NonConvergence { terms: usize },

    #[error("quadrature did not converge on [{a}, {b}]")]
    QuadratureFailed { a: f64, b: f64 },

    #[error("{failed} of {total} trials failed, above the 10% threshold")]
    TooManyFailures { failed: usize, total: usize },

    #[error("malformed input{}: {msg}", path.as_ref().map(|p| format!(" in {}", p.display())).unwrap_or_default())]
    Parse { path: Option<PathBuf>, msg: String },

    #[error("invalid encoding: {0}")]
    Encoding(#[from] std::str::Utf8Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse { path: None, msg: msg.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
