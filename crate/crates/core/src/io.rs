//! Thermocouple CSV interchange: `time,TC1,TC2,...` with temperatures in K.

use std::fs;
use std::path::Path;

pub use crate::calibration::write_json;
use crate::calibration::{csv_error, read_numeric_csv};
use crate::error::{ensure, Error, Result};
use crate::forward_model::TCProfile;

fn parse_error(path: &Path, row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message: message.into(),
    }
}

/// Reads one profile per temperature column. `depths`, when given, must have
/// one entry per column and is attached in column order; otherwise depths are
/// NaN. Rows in errors count data rows from 1.
pub fn ingest_tc_csv(path: &Path, depths: Option<&[f64]>) -> Result<Vec<TCProfile>> {
    let (header, rows) = read_numeric_csv(path)?;
    ensure!(!header.is_empty(), "{}: missing header", path.display());
    if header[0] != "time" {
        return Err(parse_error(path, 0, 1, format!("first column must be 'time', found '{}'", header[0])));
    }
    let labels = &header[1..];
    if labels.is_empty() {
        return Err(parse_error(path, 0, 2, "no thermocouple columns"));
    }
    if let Some(d) = depths {
        if d.len() != labels.len() {
            return Err(parse_error(
                path,
                0,
                header.len(),
                format!("{} thermocouple columns but {} configured depths", labels.len(), d.len()),
            ));
        }
    }
    if rows.is_empty() {
        return Err(parse_error(path, 1, 1, "file has a header but no data rows (empty profiles)"));
    }
    for (r, row) in rows.iter().enumerate() {
        if r > 0 && row[0] <= rows[r - 1][0] {
            return Err(parse_error(
                path,
                r + 1,
                1,
                format!("time {} does not increase after {}", row[0], rows[r - 1][0]),
            ));
        }
        for (c, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(parse_error(path, r + 1, c + 1, format!("non-finite value {v}")));
            }
        }
    }
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    Ok(labels
        .iter()
        .enumerate()
        .map(|(c, label)| TCProfile {
            label: label.clone(),
            times: times.clone(),
            values: rows.iter().map(|r| r[c + 1]).collect(),
            depth: depths.map_or(f64::NAN, |d| d[c]),
        })
        .collect())
}

/// Writes profiles sharing one time grid as `time,<label>...`.
pub fn write_tc_csv(path: &Path, profiles: &[TCProfile]) -> Result<()> {
    ensure!(!profiles.is_empty(), "no profiles to write");
    let times = &profiles[0].times;
    ensure!(
        profiles.iter().all(|p| &p.times == times && p.values.len() == times.len()),
        "profiles must share one time grid"
    );
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["time".to_string()];
    header.extend(profiles.iter().map(|p| p.label.clone()));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (i, t) in times.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(profiles.iter().map(|p| p.values[i].to_string()));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Creates `dir` (and parents) if missing.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `bytes` produced by a writer callback to `path`.
pub fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
