//! Result envelopes and time-series files.

use std::io::Write;
use std::path::{Path, PathBuf};

use lsh_core::Matrix;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{OutputFormat, SCHEMA_VERSION};
use crate::error::CliResult;

/// A time series with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Shortest round-trip text for every value.
    pub fn write_csv<W: Write>(&self, out: W) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// What a command produced, before it is wrapped for output.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub outputs: Value,
    pub diagnostics: Vec<String>,
    pub series: Option<Series>,
    /// `false` when the hypotheses of the applicable theorem fail.
    pub applicable: bool,
    pub seed: Option<u64>,
}

impl Report {
    pub fn new(outputs: Value) -> Self {
        Self {
            outputs,
            diagnostics: vec![],
            series: None,
            applicable: true,
            seed: None,
        }
    }

    pub fn inapplicable(mut self, reason: impl Into<String>) -> Self {
        self.applicable = false;
        self.diagnostics.push(reason.into());
        self
    }

    /// Numeric payload as JSON text; identical across runs with the same
    /// config and seed.
    pub fn payload(&self) -> String {
        serde_json::to_string(&json!({
            "applicable": self.applicable,
            "outputs": self.outputs,
            "diagnostics": self.diagnostics,
        }))
        .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Envelope<'a> {
    pub schema_version: u32,
    pub command: &'a str,
    pub config_digest: &'a str,
    pub seed: Option<u64>,
    pub applicable: bool,
    pub outputs: &'a Value,
    pub diagnostics: &'a [String],
    /// Seconds; the only field that varies between identical runs.
    pub wall_time: f64,
}

impl<'a> Envelope<'a> {
    pub fn new(command: &'a str, config_digest: &'a str, report: &'a Report, wall_time: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command,
            config_digest,
            seed: report.seed,
            applicable: report.applicable,
            outputs: &report.outputs,
            diagnostics: &report.diagnostics,
            wall_time,
        }
    }
}

/// Where the envelope and the series go.
///
/// Without a path the envelope goes to stdout (or the series, for the CSV
/// format). With a path the envelope is written as `.json` and the series
/// beside it as `.csv`.
pub fn emit(envelope: &Envelope, series: Option<&Series>, out: Option<&Path>, format: OutputFormat) -> CliResult<()> {
    match out {
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            match (format, series) {
                (OutputFormat::Csv, Some(s)) => s.write_csv(&mut lock)?,
                _ => {
                    serde_json::to_writer_pretty(&mut lock, envelope)?;
                    writeln!(lock)?;
                }
            }
        }
        Some(path) => {
            let (json_path, csv_path) = paths_for(path);
            let mut f = std::fs::File::create(&json_path)?;
            serde_json::to_writer_pretty(&mut f, envelope)?;
            writeln!(f)?;
            if let Some(s) = series {
                s.write_csv(std::fs::File::create(&csv_path)?)?;
            }
        }
    }
    Ok(())
}

fn paths_for(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("csv"))
}

pub fn matrix(m: &Matrix) -> Value {
    json!(m.to_rows())
}
