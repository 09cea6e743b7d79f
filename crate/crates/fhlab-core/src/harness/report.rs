//! Comparison reports and artifact emission: `report.json` with the full
//! structure, `report.csv` with flat rows in a fixed column order, and
//! `plotdata/*.csv` x-y series for external plotting. Emission is byte-stable
//! for identical reports.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// One comparison row. `pass` is set if and only if both a prediction and a
/// Monte Carlo estimate are present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    /// Row inputs as a JSON object (charge, N, sample counts, ...).
    pub inputs: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub predicted: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mc_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mc_stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pass: Option<bool>,
}

impl ReportRow {
    /// Build a row from a prediction/measurement pair under the tolerance law
    /// `pass <=> |predicted - mc| <= max(3 stderr, floor)`.
    pub fn compared(
        label: impl Into<String>,
        inputs: serde_json::Value,
        predicted: f64,
        mc_mean: f64,
        mc_stderr: f64,
        floor: f64,
    ) -> Self {
        let z = if mc_stderr > 0.0 {
            (mc_mean - predicted) / mc_stderr
        } else {
            0.0
        };
        let pass = (mc_mean - predicted).abs() <= (3.0 * mc_stderr).max(floor);
        ReportRow {
            label: label.into(),
            inputs,
            predicted: Some(predicted),
            mc_mean: Some(mc_mean),
            mc_stderr: Some(mc_stderr),
            z: Some(z),
            pass: Some(pass),
        }
    }

    /// A bare check row: a measured value against a boolean criterion.
    pub fn check(label: impl Into<String>, inputs: serde_json::Value, value: f64, pass: bool) -> Self {
        ReportRow {
            label: label.into(),
            inputs,
            predicted: None,
            mc_mean: Some(value),
            mc_stderr: None,
            z: None,
            pass: Some(pass),
        }
    }

    pub fn recompute_pass(&self, floor: f64) -> Option<bool> {
        match (self.predicted, self.mc_mean, self.mc_stderr) {
            (Some(p), Some(m), Some(s)) => Some((m - p).abs() <= (3.0 * s).max(floor)),
            _ => None,
        }
    }
}

/// Named x-y series for `plotdata/`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub experiment: String,
    pub seed: u64,
    pub tool_version: String,
    pub tolerance_floor: f64,
    pub runtime_seconds: f64,
}

/// Full experiment report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub metadata: ReportMeta,
    pub rows: Vec<ReportRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plot_series: Vec<PlotSeries>,
}

impl ComparisonReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass != Some(false))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write `report.json`, `report.csv`, and `plotdata/*.csv` under `dir`.
pub fn emit_outputs(report: &ComparisonReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(report)?,
    )?;

    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("report.csv"))?);
    writeln!(csv, "label,inputs,predicted,mc_mean,mc_stderr,z,pass")?;
    for r in &report.rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            csv_field(&r.label),
            csv_field(&serde_json::to_string(&r.inputs)?),
            opt(r.predicted),
            opt(r.mc_mean),
            opt(r.mc_stderr),
            opt(r.z),
            r.pass.map(|b| b.to_string()).unwrap_or_default(),
        )?;
    }
    csv.flush()?;

    if !report.plot_series.is_empty() {
        let pdir = dir.join("plotdata");
        std::fs::create_dir_all(&pdir)?;
        for series in &report.plot_series {
            let mut f =
                std::io::BufWriter::new(std::fs::File::create(pdir.join(format!("{}.csv", series.name)))?);
            writeln!(f, "x,y")?;
            for (x, y) in &series.points {
                writeln!(f, "{x},{y}")?;
            }
            f.flush()?;
        }
    }
    Ok(())
}
