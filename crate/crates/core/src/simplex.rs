//! Maps from logits onto the r-simplex `{p >= 0, sum(p) = r}`.
//!
//! All maps accept a temperature `t` and act on `z / t`. Hardmax ignores the
//! temperature since scaling preserves the argmax.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// A nonnegative vector with coordinate sum `mass`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector {
    values: Vec<f64>,
    mass: f64,
}

impl SimplexVector {
    /// Validates nonnegativity and the coordinate sum (to `1e-9 * mass`).
    pub fn new(values: Vec<f64>, mass: f64) -> Result<Self> {
        ensure_positive(mass, "simplex mass")?;
        if values.is_empty() {
            return Err(Error::domain("simplex vector must be nonempty"));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::domain(format!(
                "simplex coordinate {v} is not a finite nonnegative value"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - mass).abs() > 1e-9 * mass {
            return Err(Error::domain(format!(
                "simplex coordinates sum to {sum}, expected {mass}"
            )));
        }
        Ok(SimplexVector { values, mass })
    }

    pub(crate) fn from_parts(values: Vec<f64>, mass: f64) -> Self {
        debug_assert!(values.iter().all(|v| *v >= 0.0));
        SimplexVector { values, mass }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Hardmax,
    Softmax,
    Sparsemax,
}

impl MapKind {
    pub const ALL: [MapKind; 3] = [MapKind::Hardmax, MapKind::Softmax, MapKind::Sparsemax];

    pub fn as_str(self) -> &'static str {
        match self {
            MapKind::Hardmax => "hardmax",
            MapKind::Softmax => "softmax",
            MapKind::Sparsemax => "sparsemax",
        }
    }
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hardmax" => Ok(MapKind::Hardmax),
            "softmax" => Ok(MapKind::Softmax),
            "sparsemax" => Ok(MapKind::Sparsemax),
            other => Err(Error::Config(format!("unknown simplex map '{other}'"))),
        }
    }
}

/// A simplex map together with its temperature and target mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub kind: MapKind,
    pub temperature: f64,
    pub mass: f64,
}

impl MapSpec {
    pub fn new(kind: MapKind, temperature: f64, mass: f64) -> Result<Self> {
        ensure_positive(temperature, "temperature")?;
        ensure_positive(mass, "simplex mass")?;
        Ok(MapSpec {
            kind,
            temperature,
            mass,
        })
    }

    pub fn hardmax(mass: f64) -> Result<Self> {
        MapSpec::new(MapKind::Hardmax, 1.0, mass)
    }

    fn validate(&self) -> Result<()> {
        ensure_positive(self.temperature, "temperature")?;
        ensure_positive(self.mass, "simplex mass")
    }
}

fn check_logits(z: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(Error::domain("logit vector must be nonempty"));
    }
    if let Some((i, v)) = z.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::domain(format!("logit {i} is not finite ({v})")));
    }
    Ok(())
}

/// Index of the largest coordinate; the lowest index wins ties.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Puts all of the mass `r` on the (lowest-index) argmax coordinate.
pub fn hardmax(z: &[f64], r: f64) -> Result<SimplexVector> {
    check_logits(z)?;
    ensure_positive(r, "simplex mass")?;
    let mut out = vec![0.0; z.len()];
    out[argmax(z)] = r;
    Ok(SimplexVector::from_parts(out, r))
}

/// `r * softmax(z / t)`, evaluated with max subtraction.
pub fn softmax(z: &[f64], t: f64, r: f64) -> Result<SimplexVector> {
    check_logits(z)?;
    ensure_positive(t, "temperature")?;
    ensure_positive(r, "simplex mass")?;
    let mut out = vec![0.0; z.len()];
    softmax_into(z, t, r, &mut out);
    Ok(SimplexVector::from_parts(out, r))
}

fn softmax_into(z: &[f64], t: f64, r: f64, out: &mut [f64]) {
    let zmax = z[argmax(z)];
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = ((v - zmax) / t).exp();
        total += *o;
    }
    let scale = r / total;
    for o in out.iter_mut() {
        *o *= scale;
    }
}

/// Euclidean projection of `z / t` onto the r-simplex.
///
/// Sort descending, take the largest `k` with `r + k z_(k) > sum_{j<=k} z_(j)`,
/// set the threshold `rho = (sum_{j<=k} z_(j) - r) / k` and clip `z - rho` at 0.
pub fn generalized_sparsemax(z: &[f64], t: f64, r: f64) -> Result<SimplexVector> {
    check_logits(z)?;
    ensure_positive(t, "temperature")?;
    ensure_positive(r, "simplex mass")?;
    let mut out = vec![0.0; z.len()];
    let mut scratch = Vec::with_capacity(z.len());
    sparsemax_into(z, t, r, &mut scratch, &mut out);
    Ok(SimplexVector::from_parts(out, r))
}

fn sparsemax_into(z: &[f64], t: f64, r: f64, sorted: &mut Vec<f64>, out: &mut [f64]) {
    sorted.clear();
    sorted.extend(z.iter().map(|v| v / t));
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));

    let mut cumsum = 0.0;
    let mut support = 1;
    let mut support_sum = sorted[0];
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let k1 = (k + 1) as f64;
        if r + k1 * v > cumsum {
            support = k + 1;
            support_sum = cumsum;
        }
    }
    let rho = (support_sum - r) / support as f64;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v / t - rho).max(0.0);
    }
}

/// Dispatches on `spec.kind`.
pub fn apply_map(spec: &MapSpec, z: &[f64]) -> Result<SimplexVector> {
    spec.validate()?;
    match spec.kind {
        MapKind::Hardmax => hardmax(z, spec.mass),
        MapKind::Softmax => softmax(z, spec.temperature, spec.mass),
        MapKind::Sparsemax => generalized_sparsemax(z, spec.temperature, spec.mass),
    }
}

/// Reusable buffers for mapping many rows without reallocating.
///
/// Rows are assumed already validated (the engine checks finiteness once when a
/// score matrix is built).
#[derive(Debug, Default)]
pub(crate) struct RowMapper {
    sorted: Vec<f64>,
}

impl RowMapper {
    pub(crate) fn map_into(&mut self, spec: &MapSpec, z: &[f64], out: &mut [f64]) {
        match spec.kind {
            MapKind::Hardmax => {
                out.fill(0.0);
                out[argmax(z)] = spec.mass;
            }
            MapKind::Softmax => softmax_into(z, spec.temperature, spec.mass, out),
            MapKind::Sparsemax => {
                sparsemax_into(z, spec.temperature, spec.mass, &mut self.sorted, out)
            }
        }
    }
}
