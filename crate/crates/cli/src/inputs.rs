//! Plain-text inputs: input vectors, labels and weight matrices.

use std::path::Path;

use crate::error::{CliError, CliResult};

/// Reads a headerless CSV of numbers, one row per line, all rows equally long.
pub fn read_matrix(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let data = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data(e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            data(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row = rec
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(data(format!("line {line}: '{f}' is not a finite number"))),
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(data("no rows".into()));
    }
    Ok(rows)
}

/// Reads one class index per nonblank line.
pub fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| {
                CliError::Data(format!(
                    "{}: line {}: invalid label '{}'",
                    path.display(),
                    i + 1,
                    l.trim()
                ))
            })
        })
        .collect()
}
