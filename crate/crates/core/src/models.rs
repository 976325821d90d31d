//! Synthetic classifiers with analytically known smoothing behaviour.

use std::fmt;
use std::str::FromStr;

use crate::engine::ScoreOracle;
use crate::error::{ensure_positive, Error, Result};
use crate::exec;
use crate::noise::NoiseSeed;
use crate::specfun::{gaussian_cdf, Probability};

/// `h(x) = sign(x_1) min{r, 2L |x_1|} / 2 + r / 2`, with `sign(0) = 0`.
///
/// This L-Lipschitz function attains the elementwise smoothed Lipschitz bound
/// at `x = 0`.
pub fn eval_worst_case_hbar(x: &[f64], lipschitz: f64, mass: f64) -> Result<f64> {
    let x1 = *x
        .first()
        .ok_or_else(|| Error::domain("input must have at least one coordinate"))?;
    ensure_positive(lipschitz, "lipschitz constant")?;
    ensure_positive(mass, "simplex mass")?;
    Ok(hbar(x1, lipschitz, mass))
}

#[inline]
fn hbar(x1: f64, lipschitz: f64, mass: f64) -> f64 {
    let sign = if x1 > 0.0 {
        1.0
    } else if x1 < 0.0 {
        -1.0
    } else {
        0.0
    };
    0.5 * sign * mass.min(2.0 * lipschitz * x1.abs()) + 0.5 * mass
}

/// Exact smoothed value `Phi(x / sigma)` of the indicator `1{z > 0}`.
pub fn exact_smoothed_threshold(x: f64, sigma: f64) -> Result<Probability> {
    ensure_positive(sigma, "sigma")?;
    gaussian_cdf(x / sigma)
}

/// Dense affine logits `W x + b` with their exact spectral norm.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    lipschitz: f64,
}

impl LinearModel {
    /// `weights` is `c x d`, row per class.
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let c = weights.len();
        if c < 2 {
            return Err(Error::domain("linear model needs at least two classes"));
        }
        let d = weights[0].len();
        if d == 0 || weights.iter().any(|row| row.len() != d) {
            return Err(Error::domain(
                "weight rows must share a nonzero input dimension",
            ));
        }
        if bias.len() != c {
            return Err(Error::domain(format!(
                "bias has {} entries for {c} classes",
                bias.len()
            )));
        }
        if weights
            .iter()
            .flatten()
            .chain(&bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::domain("linear model parameters must be finite"));
        }
        let lipschitz = spectral_norm(&weights, 1e-10);
        Ok(LinearModel {
            weights,
            bias,
            lipschitz,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].len()
    }

    /// Largest singular value of `W`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::domain(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect())
    }
}

/// Power iteration on `W^T W`, stopping when successive estimates of the top
/// singular value agree to `rel_tol`.
pub fn spectral_norm(weights: &[Vec<f64>], rel_tol: f64) -> f64 {
    let d = weights[0].len();
    let apply = |v: &[f64]| -> Vec<f64> {
        weights
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    };
    let apply_t = |u: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for (row, &ui) in weights.iter().zip(u) {
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * ui;
            }
        }
        out
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut v: Vec<f64> = (0..d)
        .map(|i| 1.0 + 0.37 * ((i * 7919) % 13) as f64)
        .collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut estimate = 0.0;
    for _ in 0..100_000 {
        let wv = apply(&v);
        let next = norm(&wv);
        if next == 0.0 {
            return 0.0;
        }
        let mut w = apply_t(&wv);
        let nw = norm(&w);
        if nw == 0.0 {
            return next;
        }
        w.iter_mut().for_each(|x| *x /= nw);
        v = w;
        if (next - estimate).abs() <= rel_tol * next {
            // one more matvec at the converged vector
            return norm(&apply(&v)).max(next);
        }
        estimate = next;
    }
    estimate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    WorstCaseHbar,
    Threshold1d,
    LinearMulticlass,
    Constant,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::WorstCaseHbar => "worst_case_hbar",
            ModelKind::Threshold1d => "threshold_1d",
            ModelKind::LinearMulticlass => "linear_multiclass",
            ModelKind::Constant => "constant",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "worst_case_hbar" | "hbar" => Ok(ModelKind::WorstCaseHbar),
            "threshold_1d" | "threshold" => Ok(ModelKind::Threshold1d),
            "linear_multiclass" | "linear" => Ok(ModelKind::LinearMulticlass),
            "constant" => Ok(ModelKind::Constant),
            other => Err(Error::Config(format!("unknown synthetic model '{other}'"))),
        }
    }
}

/// Built-in base classifiers.
///
/// Scalar models (`WorstCaseHbar`, `Threshold1d`, `Constant`) are exposed to the
/// engine as two-class classifiers: hbar as logits `(r - h, h)`, the threshold
/// as `(-x_1, x_1)` whose hardmax is the indicator `1{x_1 > 0}` on class 1.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticModel {
    WorstCaseHbar { lipschitz: f64, mass: f64 },
    Threshold1d,
    LinearMulticlass(LinearModel),
    Constant { value: f64 },
}

impl SyntheticModel {
    pub fn worst_case_hbar(lipschitz: f64, mass: f64) -> Result<Self> {
        ensure_positive(lipschitz, "lipschitz constant")?;
        ensure_positive(mass, "simplex mass")?;
        Ok(SyntheticModel::WorstCaseHbar { lipschitz, mass })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            SyntheticModel::WorstCaseHbar { .. } => ModelKind::WorstCaseHbar,
            SyntheticModel::Threshold1d => ModelKind::Threshold1d,
            SyntheticModel::LinearMulticlass(_) => ModelKind::LinearMulticlass,
            SyntheticModel::Constant { .. } => ModelKind::Constant,
        }
    }

    /// Value of a scalar-valued model.
    pub fn eval_scalar(&self, x: &[f64]) -> Result<f64> {
        let x1 = || {
            x.first()
                .copied()
                .ok_or_else(|| Error::domain("input must be nonempty"))
        };
        match self {
            SyntheticModel::WorstCaseHbar { lipschitz, mass } => Ok(hbar(x1()?, *lipschitz, *mass)),
            SyntheticModel::Threshold1d => Ok(if x1()? > 0.0 { 1.0 } else { 0.0 }),
            SyntheticModel::Constant { value } => Ok(*value),
            SyntheticModel::LinearMulticlass(_) => Err(Error::domain(
                "linear multiclass model is not scalar-valued",
            )),
        }
    }

    /// Input dimension if the model fixes one.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            SyntheticModel::LinearMulticlass(m) => Some(m.input_dim()),
            _ => None,
        }
    }

    /// Known Lipschitz constant of the logit map, when there is one.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            SyntheticModel::WorstCaseHbar { lipschitz, .. } => Some(*lipschitz),
            SyntheticModel::LinearMulticlass(m) => Some(m.lipschitz()),
            SyntheticModel::Constant { .. } => Some(0.0),
            SyntheticModel::Threshold1d => Some(std::f64::consts::SQRT_2),
        }
    }
}

impl ScoreOracle for SyntheticModel {
    fn num_classes(&self) -> usize {
        match self {
            SyntheticModel::LinearMulticlass(m) => m.num_classes(),
            _ => 2,
        }
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            SyntheticModel::LinearMulticlass(m) => m.logits(x),
            SyntheticModel::WorstCaseHbar { mass, .. } => {
                let h = self.eval_scalar(x)?;
                Ok(vec![mass - h, h])
            }
            SyntheticModel::Threshold1d => {
                let x1 = *x
                    .first()
                    .ok_or_else(|| Error::domain("input must be nonempty"))?;
                Ok(vec![-x1, x1])
            }
            SyntheticModel::Constant { value } => Ok(vec![0.0, *value]),
        }
    }
}

/// Gradient of a Gaussian-smoothed scalar model, estimated two independent ways.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    /// Antithetic Stein estimate `E[delta (h(x+delta) - h(x-delta))] / (2 sigma^2)`.
    pub stein: Vec<f64>,
    pub stein_std_error: Vec<f64>,
    /// Central differences of the Monte-Carlo smoothed value (common noise).
    pub finite_difference: Vec<f64>,
    pub finite_difference_std_error: Vec<f64>,
    pub stein_norm: f64,
    pub finite_difference_norm: f64,
}

const GRADIENT_CHUNK: usize = 4096;

/// Sums and sums of squares for `2 d` per-sample quantities.
#[derive(Clone)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

/// Estimates `||grad h~(x)||` for a scalar model smoothed with `N(0, sigma^2 I)`.
///
/// The Stein estimate is returned as the primary value; central finite
/// differences with step `h_fd` are a cross-check. Any coordinate where the two
/// disagree by more than five combined standard errors raises
/// [`Error::NumericalConsistency`].
pub fn numeric_smoothed_gradient_norm(
    model: &SyntheticModel,
    x: &[f64],
    sigma: f64,
    n_mc: usize,
    h_fd: f64,
    seed: NoiseSeed,
) -> Result<GradientEstimate> {
    ensure_positive(sigma, "sigma")?;
    ensure_positive(h_fd, "finite-difference step")?;
    if n_mc < 100_000 {
        return Err(Error::domain(format!(
            "gradient estimate needs n_mc >= 1e5, got {n_mc}"
        )));
    }
    if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("input must be nonempty and finite"));
    }
    model.eval_scalar(x)?;

    let d = x.len();
    let chunks = n_mc.div_ceil(GRADIENT_CHUNK);
    let partials = exec::try_map_range(chunks, |chunk| -> Result<Moments> {
        let mut m = Moments {
            sum: vec![0.0; 2 * d],
            sum_sq: vec![0.0; 2 * d],
        };
        let mut delta = vec![0.0; d];
        let mut point = vec![0.0; d];
        let start = chunk * GRADIENT_CHUNK;
        let end = (start + GRADIENT_CHUNK).min(n_mc);
        for i in start..end {
            seed.fill_gaussian(i as u64, sigma, &mut delta);
            for (p, (a, b)) in point.iter_mut().zip(x.iter().zip(&delta)) {
                *p = a + b;
            }
            let plus = model.eval_scalar(&point)?;
            for (p, (a, b)) in point.iter_mut().zip(x.iter().zip(&delta)) {
                *p = a - b;
            }
            let minus = model.eval_scalar(&point)?;
            let diff = (plus - minus) / (2.0 * sigma * sigma);
            for j in 0..d {
                let stein = delta[j] * diff;
                for (p, (a, b)) in point.iter_mut().zip(x.iter().zip(&delta)) {
                    *p = a + b;
                }
                point[j] += h_fd;
                let fwd = model.eval_scalar(&point)?;
                point[j] -= 2.0 * h_fd;
                let bwd = model.eval_scalar(&point)?;
                let fd = (fwd - bwd) / (2.0 * h_fd);
                m.sum[j] += stein;
                m.sum_sq[j] += stein * stein;
                m.sum[d + j] += fd;
                m.sum_sq[d + j] += fd * fd;
            }
        }
        Ok(m)
    })?;

    let mut total = Moments {
        sum: vec![0.0; 2 * d],
        sum_sq: vec![0.0; 2 * d],
    };
    for p in &partials {
        for k in 0..2 * d {
            total.sum[k] += p.sum[k];
            total.sum_sq[k] += p.sum_sq[k];
        }
    }
    let n = n_mc as f64;
    let mean = |k: usize| total.sum[k] / n;
    let std_error = |k: usize| {
        let m = mean(k);
        let var = ((total.sum_sq[k] - n * m * m) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    };
    let stein: Vec<f64> = (0..d).map(mean).collect();
    let stein_std_error: Vec<f64> = (0..d).map(std_error).collect();
    let finite_difference: Vec<f64> = (d..2 * d).map(mean).collect();
    let finite_difference_std_error: Vec<f64> = (d..2 * d).map(std_error).collect();

    for j in 0..d {
        let budget = 5.0
            * (stein_std_error[j].powi(2) + finite_difference_std_error[j].powi(2)).sqrt()
            + 1e-12;
        if (stein[j] - finite_difference[j]).abs() > budget {
            return Err(Error::NumericalConsistency(format!(
                "coordinate {j}: Stein gradient {} vs finite differences {} exceeds {budget}",
                stein[j], finite_difference[j]
            )));
        }
    }
    let l2 = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(GradientEstimate {
        stein_norm: l2(&stein),
        finite_difference_norm: l2(&finite_difference),
        stein,
        stein_std_error,
        finite_difference,
        finite_difference_std_error,
    })
}
