use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function (e.g. a density outside `[0, 1]`).
    #[error("domain error: {0}")]
    Domain(String),
    /// A model or map parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("table error: {0}")]
    Table(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("retry budget exhausted after {attempts} attempts: {what}")]
    RetryBudget { attempts: usize, what: String },
    #[error("configuration mismatch: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_density<T: crate::Real>(p: T, what: &str) -> Result<()> {
    if p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{what} must lie in [0, 1], got {}",
            p.to_f64().unwrap_or(f64::NAN)
        )))
    }
}
