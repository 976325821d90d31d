//! Sample statistics and the risk corrections applied to Monte-Carlo estimates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, ensure_risk, Error, Result};
use crate::simplex::argmax;
use crate::specfun::{beta_quantile, Probability};

/// Mean and unbiased sample variance of `count` observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    /// `1/(n(n-1)) * sum_{i<j} (Z_i - Z_j)^2`, i.e. the usual unbiased variance.
    pub sample_variance: f64,
    pub count: usize,
}

impl SampleStats {
    pub fn new(mean: f64, sample_variance: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::domain(format!(
                "sample statistics need n >= 2, got {count}"
            )));
        }
        if !mean.is_finite() || !(sample_variance.is_finite() && sample_variance >= 0.0) {
            return Err(Error::domain(format!(
                "invalid sample statistics (mean {mean}, variance {sample_variance})"
            )));
        }
        Ok(SampleStats {
            mean,
            sample_variance,
            count,
        })
    }
}

/// Mean and unbiased variance, two-pass.
pub fn sample_stats(samples: &[f64]) -> Result<SampleStats> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::domain(format!(
            "sample statistics need n >= 2, got {n}"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("samples must be finite"));
    }
    // shifted by the first sample so constant inputs give exactly zero variance
    let pivot = samples[0];
    let shifted_mean = samples.iter().map(|v| v - pivot).sum::<f64>() / n as f64;
    let ss: f64 = samples
        .iter()
        .map(|v| (v - pivot - shifted_mean).powi(2))
        .sum();
    SampleStats::new(pivot + shifted_mean, ss / (n - 1) as f64, n)
}

/// Empirical Bernstein half-width for samples in `[0, range]`.
///
/// The samples are rescaled to `[0, 1]`, where
/// `shift = sqrt(2 S_n ln(2/alpha) / n) + 7 ln(2/alpha) / (3 (n - 1))`,
/// and the result is scaled back by `range`.
pub fn bernstein_shift(stats: &SampleStats, alpha: f64, range: f64) -> Result<f64> {
    ensure_risk(alpha)?;
    ensure_positive(range, "sample range")?;
    if stats.count < 2 {
        return Err(Error::domain("bernstein shift needs n >= 2"));
    }
    let n = stats.count as f64;
    let log_term = (2.0 / alpha).ln();
    let variance = stats.sample_variance / (range * range);
    let unit = (2.0 * variance * log_term / n).sqrt() + 7.0 * log_term / (3.0 * (n - 1.0));
    Ok(range * unit)
}

/// Two-sided Hoeffding half-width `range * sqrt(ln(2/alpha) / (2n))`.
pub fn hoeffding_shift(n: usize, alpha: f64, range: f64) -> Result<f64> {
    ensure_risk(alpha)?;
    ensure_positive(range, "sample range")?;
    if n == 0 {
        return Err(Error::domain("hoeffding shift needs n >= 1"));
    }
    Ok(range * ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt())
}

/// Exact two-sided Clopper-Pearson interval for `successes` out of `n`.
pub fn clopper_pearson_bounds(
    successes: u64,
    n: u64,
    alpha: f64,
) -> Result<(Probability, Probability)> {
    ensure_risk(alpha)?;
    if n == 0 || successes > n {
        return Err(Error::domain(format!(
            "invalid binomial counts {successes}/{n}"
        )));
    }
    let k = successes as f64;
    let nf = n as f64;
    let lower = if successes == 0 {
        0.0
    } else {
        beta_quantile(alpha / 2.0, k, nf - k + 1.0)?
    };
    let upper = if successes == n {
        1.0
    } else {
        beta_quantile(1.0 - alpha / 2.0, k + 1.0, nf - k)?
    };
    Ok((Probability::new(lower)?, Probability::new(upper)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConcentrationMethod {
    Bernstein,
    Hoeffding,
    /// Only valid for binary (hardmax) samples.
    ClopperPearson,
}

impl ConcentrationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ConcentrationMethod::Bernstein => "bernstein",
            ConcentrationMethod::Hoeffding => "hoeffding",
            ConcentrationMethod::ClopperPearson => "clopper-pearson",
        }
    }
}

impl fmt::Display for ConcentrationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConcentrationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "bernstein" | "empirical-bernstein" => Ok(ConcentrationMethod::Bernstein),
            "hoeffding" => Ok(ConcentrationMethod::Hoeffding),
            "clopper-pearson" | "pearson-clopper" => Ok(ConcentrationMethod::ClopperPearson),
            other => Err(Error::Config(format!(
                "unknown concentration method '{other}'"
            ))),
        }
    }
}

/// How the risk budget is spread over the per-class bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskSplit {
    /// Every class bound uses `alpha` as is.
    #[default]
    PaperLiteral,
    /// Every class bound uses `alpha / c`, giving simultaneous coverage.
    Bonferroni,
}

impl RiskSplit {
    pub fn per_class_alpha(self, alpha: f64, classes: usize) -> f64 {
        match self {
            RiskSplit::PaperLiteral => alpha,
            RiskSplit::Bonferroni => alpha / classes.max(1) as f64,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RiskSplit::PaperLiteral => "paper-literal",
            RiskSplit::Bonferroni => "bonferroni",
        }
    }
}

impl FromStr for RiskSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "paper-literal" | "per-class" => Ok(RiskSplit::PaperLiteral),
            "bonferroni" => Ok(RiskSplit::Bonferroni),
            other => Err(Error::Config(format!("unknown risk split '{other}'"))),
        }
    }
}

/// Estimated probabilities with the top class lowered and all others raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedProbs {
    pub raw: Vec<f64>,
    pub corrected: Vec<f64>,
    /// Top class of `raw` (lowest index on ties).
    pub top: usize,
    pub alpha: f64,
    pub method: ConcentrationMethod,
    pub risk_split: RiskSplit,
    pub mass: f64,
    /// Number of samples behind the estimate.
    pub count: usize,
}

/// Applies the per-class risk correction to `p_hat`.
pub fn correct_probs(
    p_hat: &[f64],
    per_class_stats: &[SampleStats],
    alpha: f64,
    method: ConcentrationMethod,
    mass: f64,
    split: RiskSplit,
) -> Result<CorrectedProbs> {
    ensure_risk(alpha)?;
    ensure_positive(mass, "simplex mass")?;
    let c = p_hat.len();
    if c == 0 {
        return Err(Error::domain("probability estimate must be nonempty"));
    }
    if per_class_stats.len() != c {
        return Err(Error::domain(format!(
            "{} class statistics for {c} classes",
            per_class_stats.len()
        )));
    }
    let tol = 1e-9 * mass.max(1.0);
    for (k, (&p, s)) in p_hat.iter().zip(per_class_stats).enumerate() {
        if !(p >= -tol && p <= mass + tol) {
            return Err(Error::domain(format!(
                "estimate {p} of class {k} outside [0, {mass}]"
            )));
        }
        if (s.mean - p).abs() > tol {
            return Err(Error::domain(format!(
                "class {k}: statistics mean {} does not match estimate {p}",
                s.mean
            )));
        }
    }
    let count = per_class_stats[0].count;
    if per_class_stats.iter().any(|s| s.count != count) {
        return Err(Error::domain(
            "class statistics disagree on the sample count",
        ));
    }

    let top = argmax(p_hat);
    let class_alpha = split.per_class_alpha(alpha, c);
    let mut corrected = Vec::with_capacity(c);
    for (k, (&p, stats)) in p_hat.iter().zip(per_class_stats).enumerate() {
        let is_top = k == top;
        let value = match method {
            ConcentrationMethod::Bernstein => {
                let shift = bernstein_shift(stats, class_alpha, mass)?;
                if is_top {
                    p - shift
                } else {
                    p + shift
                }
            }
            ConcentrationMethod::Hoeffding => {
                let shift = hoeffding_shift(count, class_alpha, mass)?;
                if is_top {
                    p - shift
                } else {
                    p + shift
                }
            }
            ConcentrationMethod::ClopperPearson => {
                let successes = binary_successes(stats, mass, k)?;
                let (lo, hi) = clopper_pearson_bounds(successes, count as u64, class_alpha)?;
                mass * if is_top { lo.get() } else { hi.get() }
            }
        };
        corrected.push(value.clamp(0.0, mass));
    }

    Ok(CorrectedProbs {
        raw: p_hat.to_vec(),
        corrected,
        top,
        alpha,
        method,
        risk_split: split,
        mass,
        count,
    })
}

/// Recovers the success count of {0, r}-valued samples from their statistics.
fn binary_successes(stats: &SampleStats, mass: f64, class: usize) -> Result<u64> {
    let n = stats.count as f64;
    let frac = stats.mean / mass;
    let k = (frac * n).round();
    let binary_variance = if stats.count > 1 {
        n / (n - 1.0) * frac * (1.0 - frac)
    } else {
        0.0
    };
    let scaled_var = stats.sample_variance / (mass * mass);
    if (frac * n - k).abs() > 1e-6 || (scaled_var - binary_variance).abs() > 1e-6 {
        return Err(Error::domain(format!(
            "clopper-pearson needs binary samples; class {class} has mean {} and variance {}",
            stats.mean, stats.sample_variance
        )));
    }
    Ok(k.clamp(0.0, n) as u64)
}
