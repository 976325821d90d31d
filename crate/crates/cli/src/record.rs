//! Certificate records, one JSON object per line.

use std::io::{BufRead, Write};
use std::path::Path;

use lvmrs::{Certificate, MapKind, Prediction};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateRecord {
    pub input_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    pub prediction: Prediction,
    pub radius: f64,
    pub rule: String,
    pub map: MapKind,
    pub temperature: f64,
    pub mass: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub n0: usize,
    pub n: usize,
    pub seed: u64,
}

impl CertificateRecord {
    pub fn new(input_id: u64, label: Option<usize>, cert: &Certificate, seed: u64) -> Self {
        CertificateRecord {
            input_id,
            label,
            prediction: cert.prediction,
            radius: cert.radius,
            rule: cert.rule.name().to_string(),
            map: cert.map.kind,
            temperature: cert.map.temperature,
            mass: cert.map.mass,
            alpha: cert.alpha,
            sigma: cert.sigma,
            n0: cert.n0,
            n: cert.n,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.radius.is_finite() && self.radius >= 0.0) {
            return Err(format!(
                "radius {} is not finite and nonnegative",
                self.radius
            ));
        }
        if self.prediction == Prediction::Abstain && self.radius != 0.0 {
            return Err(format!("abstaining record has radius {}", self.radius));
        }
        if !matches!(self.rule.as_str(), "R1" | "R2" | "R3") {
            return Err(format!("unknown radius rule '{}'", self.rule));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.temperature) {
            return Err(format!("temperature {} is not positive", self.temperature));
        }
        if !positive(self.mass) {
            return Err(format!("mass {} is not positive", self.mass));
        }
        if !positive(self.sigma) {
            return Err(format!("sigma {} is not positive", self.sigma));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if self.n < 2 {
            return Err(format!("n = {} is below 2", self.n));
        }
        if self.n0 == 1 {
            return Err("n0 = 1 is below 2".into());
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }
}

pub fn write_records<W: Write>(records: &[CertificateRecord], mut w: W) -> std::io::Result<()> {
    for r in records {
        w.write_all(r.to_json_line().as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Parses and validates a JSON Lines stream. Blank lines are skipped.
pub fn parse_records<R: BufRead>(reader: R) -> Result<Vec<CertificateRecord>, String> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| format!("line {}: {e}", i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CertificateRecord =
            serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
        rec.validate().map_err(|e| format!("line {}: {e}", i + 1))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> CliResult<Vec<CertificateRecord>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_records(std::io::BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
