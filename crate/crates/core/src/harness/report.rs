//! Report rows and deterministic CSV output.

use std::io::Write;
use std::path::Path;

use super::HarnessError;

/// One CSV row: experiment id, level (`ρ` or grid level), norm, max error, runtime.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub level: String,
    pub norm: f64,
    pub max_error: f64,
    /// Filled only when timings are requested, so reruns stay byte-identical.
    pub runtime_ms: Option<u128>,
}

/// Named pass/fail outcome attached to a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub checks: Vec<Check>,
    /// Free-form lines for the log (hypothesis margins and the like).
    pub notes: Vec<String>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn without_timings(mut self) -> Self {
        for r in &mut self.rows {
            r.runtime_ms = None;
        }
        self
    }
}

pub const HEADER: [&str; 5] = ["experiment", "level", "norm", "max_error", "runtime_ms"];

/// Writes a header plus one line per row, LF-terminated.
pub fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv_writer(out);
    w.write_record(HEADER).map_err(csv_err)?;
    for r in rows {
        let runtime = r.runtime_ms.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            r.experiment.as_str(),
            r.level.as_str(),
            &fmt_f64(r.norm),
            &fmt_f64(r.max_error),
            &runtime,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::Csv(e.to_string()))
}

/// Writes the report rows to `path`.
pub fn emit_csv(report: &Report, path: &Path) -> Result<(), HarnessError> {
    let mut buf = Vec::new();
    write_csv(&report.rows, &mut buf)?;
    std::fs::write(path, buf).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Generic table with its own header, for subcommands with wider output.
pub fn write_table<W: Write>(
    header: &[String],
    rows: &[Vec<String>],
    out: W,
) -> Result<(), HarnessError> {
    let mut w = csv_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::Csv(e.to_string()))
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Csv(e.to_string())
}

/// Shortest round-trip decimal form.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:e}")
    }
}
