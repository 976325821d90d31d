//! Pre-sampled score files.
//!
//! Binary layout, all little-endian:
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 5 | magic `LVMS1` |
//! | 5 | 1 | version (1) |
//! | 6 | 8 | classes `c` (u64) |
//! | 14 | 8 | rows per input `n` (u64) |
//! | 22 | 8 | sigma (f64, 0 when unknown) |
//! | 30 | 8 | input count (u64) |
//! | 38 | | `count` blocks of `n x c` f64, row-major |
//!
//! The CSV form has a header `input_id,sample_id,logit_0,...,logit_{c-1}` and
//! one row per noisy sample. Rows of one input are contiguous with sample ids
//! `0..n`. CSV carries no sigma.

use std::io::Write;
use std::path::Path;

use lvmrs::ScoreMatrix;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 5] = b"LVMS1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 38;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBlock {
    pub input_id: u64,
    pub scores: ScoreMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub classes: usize,
    pub rows_per_input: usize,
    /// Noise level the scores were sampled at, if recorded.
    pub sigma: Option<f64>,
    pub blocks: Vec<ScoreBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreFormat {
    Binary,
    Csv,
}

impl std::str::FromStr for ScoreFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "binary" | "bin" => Ok(ScoreFormat::Binary),
            "csv" => Ok(ScoreFormat::Csv),
            other => Err(format!("unknown score format '{other}' (binary or csv)")),
        }
    }
}

impl ScoreSet {
    pub fn new(sigma: Option<f64>, blocks: Vec<ScoreBlock>) -> CliResult<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| CliError::Data("score set has no inputs".into()))?;
        let (rows, classes) = (first.scores.rows(), first.scores.cols());
        for b in &blocks {
            if b.scores.rows() != rows || b.scores.cols() != classes {
                return Err(CliError::Data(format!(
                    "input {} has {}x{} scores, expected {rows}x{classes}",
                    b.input_id,
                    b.scores.rows(),
                    b.scores.cols()
                )));
            }
        }
        if let Some(s) = sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(CliError::Data(format!("sigma {s} is not positive")));
            }
        }
        Ok(ScoreSet {
            classes,
            rows_per_input: rows,
            sigma,
            blocks,
        })
    }
}

/// Reads either form, recognizing binary files by their magic.
pub fn read_scores(path: &Path) -> CliResult<ScoreSet> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        parse_binary(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    } else {
        parse_csv(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

fn u64_at(bytes: &[u8], offset: usize) -> u64 {
    u64::from_le_bytes(bytes[offset..offset + 8].try_into().expect("8-byte slice"))
}

fn f64_at(bytes: &[u8], offset: usize) -> f64 {
    f64::from_le_bytes(bytes[offset..offset + 8].try_into().expect("8-byte slice"))
}

pub fn parse_binary(bytes: &[u8]) -> Result<ScoreSet, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!(
            "header truncated at byte offset {}, expected {HEADER_LEN} header bytes",
            bytes.len()
        ));
    }
    if &bytes[..5] != MAGIC {
        return Err("bad magic at byte offset 0, expected LVMS1".into());
    }
    if bytes[5] != VERSION {
        return Err(format!(
            "unsupported version {} at byte offset 5, expected {VERSION}",
            bytes[5]
        ));
    }
    let classes = u64_at(bytes, 6);
    if classes == 0 {
        return Err("class count at byte offset 6 is 0".into());
    }
    let rows = u64_at(bytes, 14);
    if rows < 2 {
        return Err(format!(
            "rows per input at byte offset 14 is {rows}, need at least 2"
        ));
    }
    let sigma = f64_at(bytes, 22);
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(format!(
            "sigma at byte offset 22 is {sigma}, need a finite value >= 0"
        ));
    }
    let count = u64_at(bytes, 30);
    if count == 0 {
        return Err("input count at byte offset 30 is 0".into());
    }
    let body = classes
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(count))
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| usize::try_from(v).ok())
        .ok_or_else(|| "declared dimensions at byte offsets 6..38 overflow".to_string())?;
    let found = bytes.len() - HEADER_LEN;
    if found != body {
        return Err(format!(
            "body at byte offset {HEADER_LEN} has {found} bytes, expected {body} \
             ({count} inputs x {rows} rows x {classes} classes x 8)"
        ));
    }
    let (classes, rows) = (classes as usize, rows as usize);
    let per_block = rows * classes;
    let mut blocks = Vec::with_capacity(count as usize);
    for b in 0..count as usize {
        let mut data = Vec::with_capacity(per_block);
        for j in 0..per_block {
            let offset = HEADER_LEN + 8 * (b * per_block + j);
            let v = f64_at(bytes, offset);
            if !v.is_finite() {
                return Err(format!(
                    "non-finite value at byte offset {offset} (input {b}, row {}, class {})",
                    j / classes,
                    j % classes
                ));
            }
            data.push(v);
        }
        let scores = ScoreMatrix::new(rows, classes, data).map_err(|e| e.to_string())?;
        blocks.push(ScoreBlock {
            input_id: b as u64,
            scores,
        });
    }
    let sigma = (sigma > 0.0).then_some(sigma);
    ScoreSet::new(sigma, blocks).map_err(|e| e.to_string())
}

pub fn parse_csv(bytes: &[u8]) -> Result<ScoreSet, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| format!("line 1: {e}"))?
        .clone();
    if header.len() < 3 || &header[0] != "input_id" || &header[1] != "sample_id" {
        return Err(
            "line 1: header must start with input_id,sample_id followed by logit columns".into(),
        );
    }
    for (k, name) in header.iter().skip(2).enumerate() {
        if name != format!("logit_{k}") {
            return Err(format!(
                "line 1: column {} is '{name}', expected 'logit_{k}'",
                k + 3
            ));
        }
    }
    let classes = header.len() - 2;

    let mut blocks: Vec<(u64, Vec<f64>, usize)> = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(format!("line {line}: {e}"));
            }
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let input_id: u64 = record[0]
            .trim()
            .parse()
            .map_err(|_| format!("line {line}: invalid input_id '{}'", &record[0]))?;
        let sample_id: u64 = record[1]
            .trim()
            .parse()
            .map_err(|_| format!("line {line}: invalid sample_id '{}'", &record[1]))?;
        let start_new = blocks.last().is_none_or(|(id, _, _)| *id != input_id);
        if start_new {
            if blocks.iter().any(|(id, _, _)| *id == input_id) {
                return Err(format!(
                    "line {line}: rows of input {input_id} are not contiguous"
                ));
            }
            blocks.push((input_id, Vec::new(), 0));
        }
        let (_, data, count) = blocks.last_mut().expect("block pushed above");
        if sample_id != *count as u64 {
            return Err(format!(
                "line {line}: sample_id {sample_id}, expected {count}"
            ));
        }
        for (k, field) in record.iter().skip(2).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| format!("line {line}: invalid logit_{k} '{field}'"))?;
            if !v.is_finite() {
                return Err(format!("line {line}: logit_{k} is not finite"));
            }
            data.push(v);
        }
        *count += 1;
    }
    let rows = blocks
        .first()
        .map(|b| b.2)
        .ok_or("no score rows after the header")?;
    let mut out = Vec::with_capacity(blocks.len());
    for (id, data, count) in blocks {
        if count != rows {
            return Err(format!("input {id} has {count} rows, expected {rows}"));
        }
        let scores =
            ScoreMatrix::new(rows, classes, data).map_err(|e| format!("input {id}: {e}"))?;
        out.push(ScoreBlock {
            input_id: id,
            scores,
        });
    }
    ScoreSet::new(None, out).map_err(|e| e.to_string())
}

pub fn write_binary<W: Write>(set: &ScoreSet, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(set.classes as u64).to_le_bytes())?;
    w.write_all(&(set.rows_per_input as u64).to_le_bytes())?;
    w.write_all(&set.sigma.unwrap_or(0.0).to_le_bytes())?;
    w.write_all(&(set.blocks.len() as u64).to_le_bytes())?;
    for b in &set.blocks {
        for v in b.scores.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

/// Writes the CSV form. Values use the shortest round-tripping decimal form,
/// so reading the file back reproduces every bit.
pub fn write_csv<W: Write>(set: &ScoreSet, w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["input_id".to_string(), "sample_id".to_string()];
    header.extend((0..set.classes).map(|k| format!("logit_{k}")));
    wr.write_record(&header)?;
    for b in &set.blocks {
        for i in 0..b.scores.rows() {
            let mut rec = vec![b.input_id.to_string(), i.to_string()];
            rec.extend(b.scores.row(i).iter().map(|v| v.to_string()));
            wr.write_record(&rec)?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn write_scores(set: &ScoreSet, path: &Path, format: ScoreFormat) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let w = std::io::BufWriter::new(file);
    match format {
        ScoreFormat::Binary => write_binary(set, w).map_err(|e| CliError::io(path, e)),
        ScoreFormat::Csv => {
            write_csv(set, w).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set(sigma: Option<f64>) -> ScoreSet {
        let blocks = (0..3u64)
            .map(|id| {
                let data = (0..8)
                    .map(|j| (id as f64 + 1.0) * 0.1 * j as f64 - 0.3)
                    .collect();
                ScoreBlock {
                    input_id: id,
                    scores: ScoreMatrix::new(4, 2, data).unwrap(),
                }
            })
            .collect();
        ScoreSet::new(sigma, blocks).unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let set = sample_set(Some(0.25));
        let mut buf = Vec::new();
        write_binary(&set, &mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 3 * 4 * 2 * 8);
        assert_eq!(parse_binary(&buf).unwrap(), set);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut set = sample_set(None);
        set.blocks[1].scores = ScoreMatrix::new(
            4,
            2,
            vec![
                0.1 + 0.2,
                1e-300,
                -7.123456789012345e17,
                1.0 / 3.0,
                0.0,
                -0.0,
                2.5,
                5e-324,
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&set, &mut buf).unwrap();
        let back = parse_csv(&buf).unwrap();
        for (a, b) in set.blocks.iter().zip(&back.blocks) {
            let bits = |m: &ScoreMatrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.scores), bits(&b.scores));
        }
    }

    #[test]
    fn binary_errors_name_offsets() {
        let set = sample_set(Some(1.0));
        let mut buf = Vec::new();
        write_binary(&set, &mut buf).unwrap();

        let e = parse_binary(&buf[..20]).unwrap_err();
        assert!(e.contains("byte offset 20"), "{e}");

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(parse_binary(&bad).unwrap_err().contains("byte offset 0"));

        let mut bad = buf.clone();
        bad[5] = 9;
        assert!(parse_binary(&bad).unwrap_err().contains("byte offset 5"));

        let e = parse_binary(&buf[..buf.len() - 8]).unwrap_err();
        assert!(e.contains("expected 192"), "{e}");

        let mut bad = buf.clone();
        let off = HEADER_LEN + 8 * 5;
        bad[off..off + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        let e = parse_binary(&bad).unwrap_err();
        assert!(
            e.contains(&format!("byte offset {off}")) && e.contains("row 2, class 1"),
            "{e}"
        );
    }

    #[test]
    fn csv_errors_name_lines() {
        let ok = "input_id,sample_id,logit_0,logit_1\n0,0,1,2\n0,1,1,2\n";
        assert_eq!(parse_csv(ok.as_bytes()).unwrap().rows_per_input, 2);

        let e = parse_csv(b"input_id,sample_id,logit_0,logit_1\n0,0,1,2\n0,1,x,2\n").unwrap_err();
        assert!(e.starts_with("line 3"), "{e}");

        let e = parse_csv(b"input_id,sample_id,logit_0,logit_1\n0,0,1,2\n0,1,1\n").unwrap_err();
        assert!(e.starts_with("line 3"), "{e}");

        let e = parse_csv(b"input_id,sample_id,logit_0,logit_1\n0,0,1,2\n0,2,1,2\n").unwrap_err();
        assert!(e.starts_with("line 3") && e.contains("expected 1"), "{e}");

        let e = parse_csv(b"input_id,sample_id,logit_0,logit_1\n0,0,1,2\n0,1,1,2\n1,0,1,2\n")
            .unwrap_err();
        assert!(e.contains("input 1 has 1 rows, expected 2"), "{e}");

        let e = parse_csv(b"input_id,sample_id,score\n").unwrap_err();
        assert!(e.starts_with("line 1"), "{e}");

        let e = parse_csv(b"input_id,sample_id,logit_0,logit_1\n0,0,1,inf\n0,1,1,2\n").unwrap_err();
        assert!(e.contains("line 2") && e.contains("not finite"), "{e}");
    }
}
