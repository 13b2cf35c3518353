use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{ExperimentConfig, ExperimentKind, ReportFormat};
use crate::error::{QdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

impl Comparison {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparison::AtMost => value <= threshold,
            Comparison::AtLeast => value >= threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
        }
    }
}

/// A measured value checked against a threshold derived from a named
/// tolerance of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    /// Key into the config's `tolerances`.
    pub tolerance: String,
    pub pass: bool,
}

impl Metric {
    /// NaN never passes.
    pub fn new(name: impl Into<String>, value: f64, comparison: Comparison, threshold: f64, tolerance: &str) -> Self {
        let pass = !value.is_nan() && !threshold.is_nan() && comparison.holds(value, threshold);
        Self {
            name: name.into(),
            value,
            comparison,
            threshold,
            tolerance: tolerance.to_string(),
            pass,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64, tolerance: &str) -> Self {
        Self::new(name, value, Comparison::AtMost, threshold, tolerance)
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64, tolerance: &str) -> Self {
        Self::new(name, value, Comparison::AtLeast, threshold, tolerance)
    }
}

/// A rectangular table for the CSV summary. Cells are JSON scalars.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(cell_text))?;
        }
        w.flush().map_err(|e| QdError::io("<csv>", e))?;
        Ok(())
    }
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub pass: bool,
    pub metrics: Vec<Metric>,
    /// Experiment-specific diagnostics (sweeps, traces, ensemble summaries).
    pub details: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Table>,
    /// Data files written next to the report, relative to the output directory.
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
    /// Kept out of the report bytes so reruns compare equal; written to
    /// `<name>.timing.json` instead.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl ExperimentReport {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            name: cfg.name.clone(),
            kind: cfg.kind,
            seed: cfg.seed,
            config: cfg.clone(),
            pass: true,
            metrics: Vec::new(),
            details: Value::Object(Default::default()),
            table: None,
            artifacts: Vec::new(),
            notes: Vec::new(),
            wall_clock_s: 0.0,
        }
    }

    pub fn push(&mut self, m: Metric) {
        self.metrics.push(m);
    }

    /// `pass` is the conjunction of every metric.
    pub fn finish(&mut self) {
        self.pass = self.metrics.iter().all(|m| m.pass);
    }

    pub fn failed_metrics(&self) -> impl Iterator<Item = &Metric> {
        self.metrics.iter().filter(|m| !m.pass)
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    /// Table written as the CSV summary: the experiment's own table when
    /// there is one, otherwise the metric list.
    pub fn summary_table(&self) -> Table {
        if let Some(t) = &self.table {
            return t.clone();
        }
        let mut t = Table::new(&["metric", "value", "comparison", "threshold", "tolerance", "pass"]);
        for m in &self.metrics {
            t.push(vec![
                Value::String(m.name.clone()),
                num(m.value),
                Value::String(m.comparison.symbol().into()),
                num(m.threshold),
                Value::String(m.tolerance.clone()),
                Value::Bool(m.pass),
            ]);
        }
        t
    }
}

/// JSON number, or the string form for non-finite values.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or_else(|| Value::String(v.to_string()), Value::Number)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| QdError::io(path, e))
}

/// Writes the report in each requested format and returns the paths.
pub fn emit_report(report: &ExperimentReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| QdError::io(dir, e))?;
    let mut written = Vec::new();
    for f in formats {
        match f {
            ReportFormat::Json => {
                let path = dir.join(format!("{}.report.json", report.name));
                let mut text = serde_json::to_string_pretty(report)?;
                text.push('\n');
                write_file(&path, text.as_bytes())?;
                written.push(path);
            }
            ReportFormat::CsvSummary => {
                let path = dir.join(format!("{}.summary.csv", report.name));
                let mut buf = Vec::new();
                report.summary_table().write_csv(&mut buf)?;
                write_file(&path, &buf)?;
                written.push(path);
            }
        }
    }
    let timing = dir.join(format!("{}.timing.json", report.name));
    let text = serde_json::to_string(&serde_json::json!({ "wall_clock_s": report.wall_clock_s }))?;
    write_file(&timing, text.as_bytes())?;
    Ok(written)
}
