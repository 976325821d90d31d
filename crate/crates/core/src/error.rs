use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The Gaussian quantile was requested at 0 or 1.
    #[error("quantile of p = {0} is infinite")]
    InfiniteQuantile(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The base classifier failed while scoring a noisy sample.
    #[error("classifier failed on sample {row}: {message}")]
    Classifier { row: usize, message: String },

    /// Two independent numerical routes disagreed beyond their error budget.
    #[error("numerical consistency check failed: {0}")]
    NumericalConsistency(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub(crate) fn ensure_finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must be finite, got {x}")))
    }
}

pub(crate) fn ensure_positive(x: f64, what: &str) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{what} must be positive and finite, got {x}"
        )))
    }
}

pub(crate) fn ensure_risk(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "risk alpha must lie in (0, 1), got {alpha}"
        )))
    }
}
