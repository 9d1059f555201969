//! Post-processing of a sweep table into plotting curves.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::CliError;
use crate::experiment::fmt_f64;

#[allow(dead_code)]
#[derive(Debug, Clone, Deserialize)]
pub struct SweepRecord {
    pub mu: f64,
    pub offset: f64,
    pub u1_component: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub x_norm: f64,
    pub ratio_bound: Option<f64>,
    pub xnorm_bound: Option<f64>,
    pub in_window: bool,
    pub gsp: bool,
    pub gsn: bool,
    pub cert_failed: bool,
    pub iterations: Option<usize>,
    pub uniqueness_gap: Option<f64>,
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRecord>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<SweepRecord>, _>>()
        .map_err(|e| CliError::MalformedInput(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::MalformedInput(format!(
            "{}: no rows",
            path.display()
        )));
    }
    if rows.iter().any(|r| !r.mu.is_finite()) {
        return Err(CliError::MalformedInput(format!(
            "{}: non-finite mu",
            path.display()
        )));
    }
    Ok(rows)
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn write_curve(
    path: &Path,
    header: [&str; 3],
    rows: impl Iterator<Item = [String; 3]>,
) -> Result<(), CliError> {
    let mut w =
        csv::Writer::from_path(path).map_err(|e| CliError::MalformedInput(e.to_string()))?;
    w.write_record(header)
        .map_err(|e| CliError::MalformedInput(e.to_string()))?;
    for rec in rows {
        w.write_record(&rec)
            .map_err(|e| CliError::MalformedInput(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes `gsp_curve.csv` and `blowup_curve.csv`; returns the row count.
pub fn report(sweep: &Path, out: &Path) -> Result<usize, CliError> {
    let mut rows = read_sweep(sweep)?;
    rows.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_curve(
        &out.join("gsp_curve.csv"),
        ["mu", "min_ratio", "lower_bound"],
        rows.iter().map(|r| {
            let bound = if r.gsp { r.ratio_bound } else { None };
            [fmt_f64(r.mu), fmt_f64(r.min_ratio), opt(bound)]
        }),
    )?;
    write_curve(
        &out.join("blowup_curve.csv"),
        ["mu", "x_norm", "bound"],
        rows.iter()
            .map(|r| [fmt_f64(r.mu), fmt_f64(r.x_norm), opt(r.xnorm_bound)]),
    )?;
    Ok(rows.len())
}
