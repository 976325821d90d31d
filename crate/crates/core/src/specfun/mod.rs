//! Scalar special functions: the standard Gaussian CDF and quantile, the error
//! function, and the regularized incomplete beta used by Clopper-Pearson.

mod beta;
mod normal;

pub use beta::{beta_quantile, ln_gamma, regularized_incomplete_beta};
pub use normal::{erf, erfc, gaussian_cdf, gaussian_pdf, gaussian_quantile};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);
    pub const HALF: Probability = Probability(0.5);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::domain(format!(
                "probability must lie in [0, 1], got {value}"
            )))
        }
    }

    /// Clamps a finite value into `[0, 1]`.
    pub(crate) fn saturating(value: f64) -> Self {
        Probability(value.clamp(0.0, 1.0))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    pub fn complement(self) -> Self {
        Probability(1.0 - self.0)
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}
