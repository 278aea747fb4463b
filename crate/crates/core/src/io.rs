//! File formats: samples and traces as CSV, models and reports as JSON.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GmmModel;
use crate::types::SampleBatch;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Significant digits kept for model parameters on disk. Fewer than the 17 a
/// double needs, so that reloading and saving again reproduces the file.
const MODEL_DIGITS: usize = 12;

pub fn read_samples_csv(path: &Path) -> Result<SampleBatch> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_samples(file, path)
}

/// Parses comma-separated float rows. A first row with no numeric cells is
/// taken as a header.
pub fn read_samples<R: Read>(reader: R, label: &Path) -> Result<SampleBatch> {
    let parse_err = |line: u64, msg: String| Error::Parse { path: label.to_path_buf(), line: line as usize, msg };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut dim = None;
    let mut count = 0;
    for (index, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(index as u64 + 1);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
        if index == 0 && parsed.iter().all(|p| p.is_err()) {
            continue;
        }
        let expected = *dim.get_or_insert(record.len());
        if record.len() != expected {
            return Err(parse_err(line, format!("expected {expected} columns, found {}", record.len())));
        }
        for (col, (cell, value)) in record.iter().zip(parsed).enumerate() {
            match value {
                Ok(v) if v.is_finite() => data.push(v),
                _ => return Err(parse_err(line, format!("column {}: '{cell}' is not a finite number", col + 1))),
            }
        }
        count += 1;
    }
    let dim = dim.ok_or_else(|| parse_err(1, "no sample rows".into()))?;
    SampleBatch::new(data, count, dim)
}

pub fn write_samples_csv(path: &Path, samples: &SampleBatch, header: bool) -> Result<()> {
    write_with(path, |w| {
        if header {
            let names: Vec<String> = (0..samples.dim()).map(|i| format!("x{i}")).collect();
            writeln!(w, "{}", names.join(","))?;
        }
        for row in samples.rows() {
            write_row(w, row)?;
        }
        Ok(())
    })
}

/// `step,loss` header followed by one row per entry.
pub fn write_trace_csv(path: &Path, column: &str, values: &[f64]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "step,{column}")?;
        for (i, v) in values.iter().enumerate() {
            writeln!(w, "{i},{v}")?;
        }
        Ok(())
    })
}

pub fn write_rows_csv(path: &Path, header: &str, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "{header}")?;
        for row in rows {
            write_row(w, &row)?;
        }
        Ok(())
    })
}

fn write_row(w: &mut dyn Write, row: &[f64]) -> std::io::Result<()> {
    let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
    writeln!(w, "{}", cells.join(","))
}

pub(crate) fn write_with(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// On-disk mixture: weights, means and full covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub dim: usize,
    pub components: Vec<ComponentFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentFile {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Rows of the covariance matrix.
    pub cov: Vec<Vec<f64>>,
}

impl ModelFile {
    /// Rounds values so that saving a loaded file reproduces it byte for byte.
    /// Weights become multiples of `1e-12` summing to exactly one. Covariance
    /// entries are rounded relative to `sqrt(Σ_ii Σ_jj)` rather than their own
    /// magnitude, since small off-diagonals lose relative precision in the
    /// Cholesky round trip.
    pub fn from_model(model: &GmmModel) -> Self {
        let m = model.dim();
        let weights = quantize_weights(&model.weights());
        let components = (0..model.components())
            .map(|k| {
                let cov = model.covariance(k);
                let diag: Vec<f64> = (0..m).map(|i| round_relative(cov[i * m + i], cov[i * m + i])).collect();
                let rows = (0..m)
                    .map(|i| {
                        (0..m)
                            .map(|j| if i == j { diag[i] } else { round_relative(cov[i * m + j], (diag[i] * diag[j]).sqrt()) })
                            .collect()
                    })
                    .collect();
                ComponentFile {
                    weight: weights[k],
                    mean: model.mean(k).iter().map(|&v| round_relative(v, v)).collect(),
                    cov: rows,
                }
            })
            .collect();
        Self { schema_version: MODEL_SCHEMA_VERSION, dim: m, components }
    }

    pub fn to_model(&self) -> Result<GmmModel> {
        let bad = |msg: String| Error::ModelFile(msg);
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(bad(format!("unsupported schema_version {}", self.schema_version)));
        }
        let m = self.dim;
        if m == 0 || self.components.is_empty() {
            return Err(bad("dim and component count must be >= 1".into()));
        }
        let mut weights = Vec::new();
        let mut means = Vec::new();
        let mut covs = Vec::new();
        for (k, c) in self.components.iter().enumerate() {
            if c.mean.len() != m || c.cov.len() != m || c.cov.iter().any(|r| r.len() != m) {
                return Err(bad(format!("component {k}: shapes do not match dim {m}")));
            }
            weights.push(c.weight);
            means.extend_from_slice(&c.mean);
            covs.extend(c.cov.iter().flatten());
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(bad(format!("weights sum to {total}, expected 1")));
        }
        GmmModel::from_moments(&weights, &means, &covs).map_err(|e| bad(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model file serializes");
        s.push('\n');
        s
    }
}

/// Rounds `v` to `MODEL_DIGITS` significant digits of `scale`.
fn round_relative(v: f64, scale: f64) -> f64 {
    if v == 0.0 || scale == 0.0 {
        return 0.0;
    }
    let quantum = scale.abs().log10().floor() as i32 - (MODEL_DIGITS as i32 - 1);
    let digits = v.abs().log10().floor() as i32 - quantum;
    if digits < 0 {
        return 0.0;
    }
    let r: f64 = format!("{:.*e}", digits as usize, v).parse().expect("formatted float parses");
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Weights as multiples of `1e-12`; the largest absorbs the rounding so the
/// decimal values sum to exactly one.
fn quantize_weights(weights: &[f64]) -> Vec<f64> {
    const UNITS: i64 = 1_000_000_000_000;
    let mut n: Vec<i64> = weights.iter().map(|w| (w * UNITS as f64).round() as i64).collect();
    let largest = (0..n.len()).max_by_key(|&i| n[i]).unwrap_or(0);
    let rest: i64 = n.iter().enumerate().filter(|&(i, _)| i != largest).map(|(_, v)| v).sum();
    n[largest] = UNITS - rest;
    n.iter().map(|&v| v as f64 / UNITS as f64).collect()
}

pub fn save_model(path: &Path, model: &GmmModel) -> Result<()> {
    let json = ModelFile::from_model(model).to_json();
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<GmmModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::ModelFile(format!("{}: {e}", path.display())))?;
    file.to_model()
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::ModelFile(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
