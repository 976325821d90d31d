//! Monte-Carlo estimation of smoothed classifiers and the map-selecting
//! certification procedure.
//!
//! Certification of one input draws two independent noise batches. The
//! validation batch (`n0` rows) scores every `(map, temperature)` candidate by
//! its risk-corrected R2 radius; the certification batch (`n` rows) is only ever
//! mapped with the selected candidate, so the final certificate keeps its
//! `1 - alpha` guarantee.

use serde::{Deserialize, Serialize};

use crate::concentration::{
    correct_probs, ConcentrationMethod, CorrectedProbs, RiskSplit, SampleStats,
};
use crate::error::{ensure_positive, ensure_risk, Error, Result};
use crate::exec;
pub use crate::noise::NoiseSeed;
use crate::noise::{STREAM_CERTIFICATION, STREAM_VALIDATION};
use crate::radius::{certify, Certificate, Prediction, RadiusRule};
use crate::simplex::{MapKind, MapSpec, RowMapper};

/// A base classifier returning one logit per class.
pub trait ScoreOracle: Sync {
    fn num_classes(&self) -> usize;
    fn scores(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl<T: ScoreOracle + ?Sized> ScoreOracle for &T {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).scores(x)
    }
}

/// `rows x cols` logits, row-major: row `i` is `f(x + delta_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows < 2 {
            return Err(Error::domain(format!(
                "score matrix needs at least 2 rows, got {rows}"
            )));
        }
        if cols == 0 {
            return Err(Error::domain("score matrix needs at least one class"));
        }
        if data.len() != rows * cols {
            return Err(Error::domain(format!(
                "score matrix of {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite score at row {}, class {}",
                i / cols,
                i % cols
            )));
        }
        Ok(ScoreMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<ScoreMatrix> {
        if start > end || end > self.rows {
            return Err(Error::domain(format!(
                "row range {start}..{end} out of 0..{}",
                self.rows
            )));
        }
        ScoreMatrix::new(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        )
    }
}

/// Scores `n` Gaussian perturbations of `x`.
///
/// Row `i` uses noise derived from `(seed, i)` only, so the matrix does not
/// depend on scheduling.
pub fn sample_scores<C: ScoreOracle + ?Sized>(
    classifier: &C,
    x: &[f64],
    n: usize,
    sigma: f64,
    seed: NoiseSeed,
) -> Result<ScoreMatrix> {
    ensure_positive(sigma, "sigma")?;
    if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("input must be nonempty and finite"));
    }
    let c = classifier.num_classes();
    let rows = exec::try_map_range(n, |i| -> Result<Vec<f64>> {
        let mut point = vec![0.0; x.len()];
        seed.fill_gaussian(i as u64, sigma, &mut point);
        for (p, v) in point.iter_mut().zip(x) {
            *p += v;
        }
        let out = classifier.scores(&point).map_err(|e| Error::Classifier {
            row: i,
            message: e.to_string(),
        })?;
        if out.len() != c {
            return Err(Error::Classifier {
                row: i,
                message: format!("returned {} scores for {c} classes", out.len()),
            });
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Classifier {
                row: i,
                message: "returned a non-finite score".into(),
            });
        }
        Ok(out)
    })?;
    ScoreMatrix::new(n, c, rows.concat())
}

const ROW_CHUNK: usize = 1024;

/// Per-class count, mean and sum of squared deviations of one chunk of rows.
struct ChunkMoments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

/// Maps every row with `spec` and returns the per-class mean (the estimate
/// `p_hat`) and sample statistics of the mapped coordinates.
pub fn estimate_phat(scores: &ScoreMatrix, spec: &MapSpec) -> Result<(Vec<f64>, Vec<SampleStats>)> {
    MapSpec::new(spec.kind, spec.temperature, spec.mass)?;
    let c = scores.cols;
    let chunks = scores.rows.div_ceil(ROW_CHUNK);
    let partials = exec::map_range(chunks, |k| {
        let start = k * ROW_CHUNK;
        let end = (start + ROW_CHUNK).min(scores.rows);
        let mut mapper = RowMapper::default();
        let mut mapped = vec![0.0; c];
        let mut m = ChunkMoments {
            count: 0,
            mean: vec![0.0; c],
            m2: vec![0.0; c],
        };
        for i in start..end {
            mapper.map_into(spec, scores.row(i), &mut mapped);
            m.count += 1;
            let n = m.count as f64;
            for ((v, mean), m2) in mapped.iter().zip(&mut m.mean).zip(&mut m.m2) {
                let delta = v - *mean;
                *mean += delta / n;
                *m2 += delta * (v - *mean);
            }
        }
        m
    });

    // Chan et al. pairwise merge, in chunk order.
    let mut total = ChunkMoments {
        count: 0,
        mean: vec![0.0; c],
        m2: vec![0.0; c],
    };
    for p in partials {
        let (na, nb) = (total.count as f64, p.count as f64);
        let n = na + nb;
        for j in 0..c {
            let delta = p.mean[j] - total.mean[j];
            total.mean[j] += delta * nb / n;
            total.m2[j] += p.m2[j] + delta * delta * na * nb / n;
        }
        total.count += p.count;
    }
    let denom = (total.count - 1) as f64;
    let stats = (0..c)
        .map(|j| SampleStats::new(total.mean[j], (total.m2[j] / denom).max(0.0), total.count))
        .collect::<Result<Vec<_>>>()?;
    Ok((total.mean, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemperatureScale {
    #[default]
    Log,
    Linear,
}

impl std::str::FromStr for TemperatureScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "log" | "logarithmic" => Ok(TemperatureScale::Log),
            "linear" | "lin" => Ok(TemperatureScale::Linear),
            other => Err(Error::Config(format!(
                "unknown temperature scale '{other}'"
            ))),
        }
    }
}

/// `count` temperatures from `lower` to `upper` inclusive.
pub fn temperature_grid(
    lower: f64,
    upper: f64,
    count: usize,
    scale: TemperatureScale,
) -> Result<Vec<f64>> {
    ensure_positive(lower, "lower temperature")?;
    ensure_positive(upper, "upper temperature")?;
    if upper < lower {
        return Err(Error::Config(format!(
            "temperature range [{lower}, {upper}] is empty"
        )));
    }
    match count {
        0 => Err(Error::Config(
            "temperature grid needs at least one point".into(),
        )),
        1 => Ok(vec![lower]),
        _ => Ok((0..count)
            .map(|i| {
                let f = i as f64 / (count - 1) as f64;
                if i + 1 == count {
                    upper
                } else {
                    match scale {
                        TemperatureScale::Log => (lower.ln() + f * (upper.ln() - lower.ln())).exp(),
                        TemperatureScale::Linear => lower + f * (upper - lower),
                    }
                }
            })
            .collect()),
    }
}

/// Everything the map-selecting certification needs besides the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub temperatures: Vec<f64>,
    pub map_kinds: Vec<MapKind>,
    pub mass: f64,
    pub n0: usize,
    pub n: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub seed: u64,
    /// Risk correction for the smooth maps. Clopper-Pearson only applies to
    /// hardmax; the smooth maps fall back to Bernstein when it is chosen.
    pub method: ConcentrationMethod,
    pub risk_split: RiskSplit,
}

impl GridConfig {
    /// 50 log-spaced temperatures in `[0.01, 50]` over all three maps, r = 1,
    /// alpha = 1e-3, Bernstein.
    pub fn new(sigma: f64, n0: usize, n: usize) -> Result<Self> {
        let cfg = GridConfig {
            temperatures: temperature_grid(0.01, 50.0, 50, TemperatureScale::Log)?,
            map_kinds: MapKind::ALL.to_vec(),
            mass: 1.0,
            n0,
            n,
            alpha: 1e-3,
            sigma,
            seed: 0,
            method: ConcentrationMethod::Bernstein,
            risk_split: RiskSplit::PaperLiteral,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.map_kinds.is_empty() || self.temperatures.is_empty() {
            return Err(Error::Config("the (map, temperature) grid is empty".into()));
        }
        for &t in &self.temperatures {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!("temperature {t} is not positive")));
            }
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::Config(format!("mass {} is not positive", self.mass)));
        }
        if self.n0 < 2 || self.n < 2 {
            return Err(Error::Config(format!(
                "need n0, n >= 2 (got {}, {})",
                self.n0, self.n
            )));
        }
        ensure_risk(self.alpha).map_err(|e| Error::Config(e.to_string()))?;
        ensure_positive(self.sigma, "sigma").map_err(|e| Error::Config(e.to_string()))
    }

    /// Candidates in grid order: temperatures outer, maps inner. Hardmax does
    /// not depend on the temperature and appears once, at its first slot.
    pub fn candidates(&self) -> Result<Vec<MapSpec>> {
        self.validate()?;
        let mut out = Vec::new();
        let mut hardmax_seen = false;
        for &t in &self.temperatures {
            for &kind in &self.map_kinds {
                if kind == MapKind::Hardmax {
                    if hardmax_seen {
                        continue;
                    }
                    hardmax_seen = true;
                    out.push(MapSpec::new(kind, 1.0, self.mass)?);
                } else {
                    out.push(MapSpec::new(kind, t, self.mass)?);
                }
            }
        }
        Ok(out)
    }

    pub fn method_for(&self, kind: MapKind) -> ConcentrationMethod {
        match (self.method, kind) {
            (ConcentrationMethod::ClopperPearson, MapKind::Hardmax) => {
                ConcentrationMethod::ClopperPearson
            }
            (ConcentrationMethod::ClopperPearson, _) => ConcentrationMethod::Bernstein,
            (m, _) => m,
        }
    }
}

/// Risk-corrected estimate of `scores` under `spec`.
pub fn corrected_estimate(
    scores: &ScoreMatrix,
    spec: &MapSpec,
    grid: &GridConfig,
) -> Result<CorrectedProbs> {
    let (p_hat, stats) = estimate_phat(scores, spec)?;
    correct_probs(
        &p_hat,
        &stats,
        grid.alpha,
        grid.method_for(spec.kind),
        spec.mass,
        grid.risk_split,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub map: MapSpec,
    /// Corrected R2 radius on the validation batch (0 when it would abstain).
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub candidates: Vec<CandidateScore>,
    /// Index of the first candidate with the largest radius.
    pub best: usize,
}

impl Selection {
    pub fn selected(&self) -> &CandidateScore {
        &self.candidates[self.best]
    }
}

/// Scores every candidate on the validation batch and picks the best.
pub fn select_map(validation: &ScoreMatrix, grid: &GridConfig) -> Result<Selection> {
    let specs = grid.candidates()?;
    let candidates = exec::try_map_range(specs.len(), |i| -> Result<CandidateScore> {
        let spec = specs[i];
        let corrected = corrected_estimate(validation, &spec, grid)?;
        let radius = certify(&corrected, grid.sigma, RadiusRule::R2, spec)?.radius;
        Ok(CandidateScore { map: spec, radius })
    })?;
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.radius > candidates[best].radius {
            best = i;
        }
    }
    Ok(Selection { candidates, best })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LvmRsOutcome {
    pub certificate: Certificate,
    pub selection: Selection,
    pub corrected: CorrectedProbs,
}

/// Selects a map on `validation`, then certifies with it on `certification`.
pub fn lvm_rs_certify_scores(
    validation: &ScoreMatrix,
    certification: &ScoreMatrix,
    grid: &GridConfig,
) -> Result<LvmRsOutcome> {
    grid.validate()?;
    if validation.cols != certification.cols {
        return Err(Error::domain(format!(
            "validation has {} classes, certification has {}",
            validation.cols, certification.cols
        )));
    }
    let selection = select_map(validation, grid)?;
    let map = selection.selected().map;
    let corrected = corrected_estimate(certification, &map, grid)?;
    let mut certificate = certify(&corrected, grid.sigma, RadiusRule::R2, map)?;
    certificate.n0 = validation.rows;
    Ok(LvmRsOutcome {
        certificate,
        selection,
        corrected,
    })
}

/// Full procedure on a live classifier: samples both batches from independent
/// streams keyed by `(grid.seed, input_id)`.
pub fn lvm_rs_run<C: ScoreOracle + ?Sized>(
    classifier: &C,
    x: &[f64],
    input_id: u64,
    grid: &GridConfig,
) -> Result<LvmRsOutcome> {
    grid.validate()?;
    let base = NoiseSeed::new(grid.seed, input_id, STREAM_VALIDATION);
    let validation = sample_scores(classifier, x, grid.n0, grid.sigma, base)?;
    let certification = sample_scores(
        classifier,
        x,
        grid.n,
        grid.sigma,
        base.with_stream(STREAM_CERTIFICATION),
    )?;
    lvm_rs_certify_scores(&validation, &certification, grid)
}

pub fn lvm_rs_certify<C: ScoreOracle + ?Sized>(
    classifier: &C,
    x: &[f64],
    input_id: u64,
    grid: &GridConfig,
) -> Result<Certificate> {
    lvm_rs_run(classifier, x, input_id, grid).map(|o| o.certificate)
}

/// Certifies each input (id = position) and returns certificates in order.
pub fn certify_batch<C: ScoreOracle + ?Sized>(
    classifier: &C,
    inputs: &[Vec<f64>],
    grid: &GridConfig,
) -> Result<Vec<Certificate>> {
    grid.validate()?;
    exec::try_map_range(inputs.len(), |i| {
        lvm_rs_certify(classifier, &inputs[i], i as u64, grid)
    })
}

/// Fraction of inputs predicted correctly with radius at least `eps`, per `eps`.
pub fn certified_accuracy_curve(
    certificates: &[Certificate],
    labels: &[usize],
    eps_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let outcomes: Vec<(Prediction, f64)> = certificates
        .iter()
        .map(|c| (c.prediction, c.radius))
        .collect();
    accuracy_curve(&outcomes, labels, eps_grid)
}

/// [`certified_accuracy_curve`] on bare `(prediction, radius)` pairs.
pub fn accuracy_curve(
    outcomes: &[(Prediction, f64)],
    labels: &[usize],
    eps_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if outcomes.len() != labels.len() {
        return Err(Error::domain(format!(
            "{} certificates but {} labels",
            outcomes.len(),
            labels.len()
        )));
    }
    if let Some(e) = eps_grid.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(Error::domain(format!(
            "perturbation level {e} must be finite and nonnegative"
        )));
    }
    let total = outcomes.len();
    Ok(eps_grid
        .iter()
        .map(|&eps| {
            let hits = outcomes
                .iter()
                .zip(labels)
                .filter(|((p, r), &y)| p.class() == Some(y) && *r >= eps)
                .count();
            let acc = if total == 0 {
                0.0
            } else {
                hits as f64 / total as f64
            };
            (eps, acc)
        })
        .collect())
}
