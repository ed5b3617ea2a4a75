//! CSV and JSON interchange for SVM data and externally fitted Gaussians.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use super::TargetModel;
use crate::error::{Error, Result};

/// Writes observations with header `t,Y_t` (t starting at 1).
pub fn save_svm_csv(path: &Path, y: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    w.write_record(["t", "Y_t"]).map_err(|e| Error::Parse(e.to_string()))?;
    for (t, v) in y.iter().enumerate() {
        w.write_record([(t + 1).to_string(), v.to_string()])
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads observations written by [`save_svm_csv`]; rows may come in any order.
pub fn load_svm_csv(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let headers = r.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse(format!("missing column {name}")))
    };
    let (ti, yi) = (col("t")?, col("Y_t")?);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Parse("short row".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(e.to_string()))
        };
        rows.push((parse(ti)? as usize, parse(yi)?));
    }
    rows.sort_by_key(|(t, _)| *t);
    for (i, (t, _)) in rows.iter().enumerate() {
        if *t != i + 1 {
            return Err(Error::Parse(format!("time index {t} out of sequence")));
        }
    }
    Ok(rows.into_iter().map(|(_, y)| y).collect())
}

#[derive(Deserialize)]
struct GaussianJson {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

/// Loads a Gaussian from JSON (`{"mean": [...], "cov": [[...], ...]}`) or from
/// a header-less CSV whose first row is the mean and remaining rows the
/// covariance. The format is chosen by file extension.
pub fn load_gaussian(path: &Path) -> Result<TargetModel> {
    let text = std::fs::read_to_string(path)?;
    let (mean, rows) = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let g: GaussianJson = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        (g.mean, g.cov)
    } else {
        let mut lines = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                .collect::<Result<Vec<f64>>>()?;
            lines.push(row);
        }
        if lines.is_empty() {
            return Err(Error::Parse("empty gaussian file".into()));
        }
        let mean = lines.remove(0);
        (mean, lines)
    };
    let d = mean.len();
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Parse(format!("covariance must be {d}x{d}")));
    }
    let cov = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
    TargetModel::dense(mean, cov)
}
