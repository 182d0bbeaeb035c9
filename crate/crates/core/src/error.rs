use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the solvers, analyzers and front end can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid time: {0}")]
    InvalidTime(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("wrong equation: {0}")]
    WrongEquation(String),
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("shape mismatch: expected {expected} values, got {found}")]
    Shape { expected: usize, found: usize },
    #[error("corrupted state: {0}")]
    CorruptedState(String),
    #[error("stability violation: dt = {dt:e} exceeds limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("blowup at step {step}, t = {t}: {message}")]
    Blowup { step: usize, t: f64, message: String },
    #[error("interpolation error: {0}")]
    Interpolation(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidResolution(_)
                | Error::InvalidGeometry(_)
                | Error::InvalidParameter(_)
                | Error::InvalidTime(_)
                | Error::InvalidWindow(_)
                | Error::InvalidQuery(_)
                | Error::WrongEquation(_)
                | Error::Config { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
