//! Margins, certified radii and certificate assembly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::concentration::CorrectedProbs;
use crate::error::{ensure_positive, Error, Result};
use crate::simplex::{argmax, MapSpec};
use crate::specfun::{gaussian_quantile, Probability};

/// Quantile arguments are kept this far away from 0 and 1.
pub const QUANTILE_CLAMP: f64 = 1e-12;

/// `max(0, scores[label] - max_{k != label} scores[k])`.
pub fn margin(scores: &[f64], label: usize) -> Result<f64> {
    if scores.len() < 2 {
        return Err(Error::domain("margin needs at least two classes"));
    }
    if label >= scores.len() {
        return Err(Error::domain(format!(
            "label {label} out of range for {} classes",
            scores.len()
        )));
    }
    let other = scores
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != label)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((scores[label] - other).max(0.0))
}

/// Margin radius `margin / (sqrt(2) * lipschitz)`.
pub fn radius_r1(margin: f64, lipschitz: f64) -> Result<f64> {
    ensure_positive(lipschitz, "lipschitz constant")?;
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::domain(format!(
            "margin must be finite and nonnegative, got {margin}"
        )));
    }
    Ok(margin / (std::f64::consts::SQRT_2 * lipschitz))
}

fn clamped_quantile(p: f64) -> Result<f64> {
    gaussian_quantile(p.clamp(QUANTILE_CLAMP, 1.0 - QUANTILE_CLAMP))
}

/// Largest and second-largest entries, top index first on ties.
fn top_two(p: &[f64]) -> (usize, f64, f64) {
    let top = argmax(p);
    let second = p
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != top)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    (top, p[top], second)
}

/// `max(0, sigma/2 * (Phi^-1(p1) - Phi^-1(p2)))` with `p` normalized by `mass`.
///
/// `p` need not sum to `mass` (risk-corrected vectors do not).
pub fn radius_r2(p: &[f64], mass: f64, sigma: f64) -> Result<f64> {
    ensure_positive(sigma, "sigma")?;
    ensure_positive(mass, "simplex mass")?;
    if p.len() < 2 {
        return Err(Error::domain("radius needs at least two classes"));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("probabilities must be finite"));
    }
    let (_, p1, p2) = top_two(p);
    let gap = clamped_quantile(p1 / mass)? - clamped_quantile(p2 / mass)?;
    Ok((0.5 * sigma * gap).max(0.0))
}

/// `max(0, sigma * Phi^-1(p1))`.
pub fn radius_r3(p1: Probability, sigma: f64) -> Result<f64> {
    ensure_positive(sigma, "sigma")?;
    Ok((sigma * clamped_quantile(p1.get())?).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prediction {
    Class(usize),
    Abstain,
}

impl Prediction {
    pub fn class(self) -> Option<usize> {
        match self {
            Prediction::Class(k) => Some(k),
            Prediction::Abstain => None,
        }
    }
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prediction::Class(k) => write!(f, "{k}"),
            Prediction::Abstain => f.write_str("abstain"),
        }
    }
}

impl FromStr for Prediction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("abstain") {
            return Ok(Prediction::Abstain);
        }
        s.parse::<usize>()
            .map(Prediction::Class)
            .map_err(|_| Error::domain(format!("invalid prediction '{s}'")))
    }
}

impl Serialize for Prediction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Prediction::Class(k) => s.serialize_u64(*k as u64),
            Prediction::Abstain => s.serialize_str("abstain"),
        }
    }
}

impl<'de> Deserialize<'de> for Prediction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Class(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Class(k) => Ok(Prediction::Class(k as usize)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Which radius formula a certificate uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusRule {
    /// Margin of the corrected vector over `sqrt(2)` times the Lipschitz
    /// constant of the smoothed classifier.
    R1 {
        smoothed_lipschitz: f64,
    },
    R2,
    R3,
}

impl RadiusRule {
    pub fn name(&self) -> &'static str {
        match self {
            RadiusRule::R1 { .. } => "R1",
            RadiusRule::R2 => "R2",
            RadiusRule::R3 => "R3",
        }
    }
}

impl fmt::Display for RadiusRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub prediction: Prediction,
    pub radius: f64,
    pub rule: RadiusRule,
    pub sigma: f64,
    pub alpha: f64,
    /// Validation samples used to pick the map (0 when no selection happened).
    pub n0: usize,
    pub n: usize,
    pub map: MapSpec,
}

impl Certificate {
    pub fn is_abstain(&self) -> bool {
        self.prediction == Prediction::Abstain
    }
}

/// Turns a risk-corrected vector into a certificate.
///
/// The prediction is the top class of the raw estimate. If its corrected entry
/// does not strictly exceed every other corrected entry the certificate
/// abstains with radius 0.
pub fn certify(
    corrected: &CorrectedProbs,
    sigma: f64,
    rule: RadiusRule,
    map: MapSpec,
) -> Result<Certificate> {
    ensure_positive(sigma, "sigma")?;
    let p = &corrected.corrected;
    if p.len() < 2 {
        return Err(Error::domain("certification needs at least two classes"));
    }
    let top = corrected.top;
    if top >= p.len() {
        return Err(Error::domain(format!("top class {top} out of range")));
    }
    let p1 = p[top];
    let p2 = p
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != top)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let (prediction, radius) = if p1.partial_cmp(&p2) != Some(std::cmp::Ordering::Greater) {
        (Prediction::Abstain, 0.0)
    } else {
        let radius = match rule {
            RadiusRule::R1 { smoothed_lipschitz } => {
                radius_r1(margin(p, top)?, smoothed_lipschitz)?
            }
            RadiusRule::R2 => radius_r2(p, corrected.mass, sigma)?,
            RadiusRule::R3 => radius_r3(Probability::saturating(p1 / corrected.mass), sigma)?,
        };
        (Prediction::Class(top), radius)
    };
    Ok(Certificate {
        prediction,
        radius,
        rule,
        sigma,
        alpha: corrected.alpha,
        n0: 0,
        n: corrected.count,
        map,
    })
}
