//! Report assembly and serialization.

use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Format;

pub const OUT_DIR_ENV: &str = "MOELAB_OUT_DIR";

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub tag: String,
    pub passed: bool,
    /// Advisory checks are reported but never fail the run.
    pub advisory: bool,
}

pub struct Report {
    pub command: String,
    pub config: Value,
    pub checks: Vec<Check>,
    pub data: Value,
    pub csv_header: Vec<String>,
    pub csv_rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self { command: command.into(), config: Value::Null, checks: vec![], data: Value::Null, csv_header: vec![], csv_rows: vec![] }
    }

    pub fn check(&mut self, tag: &str, passed: bool) {
        self.checks.push(Check { tag: tag.into(), passed, advisory: false });
    }

    pub fn advisory(&mut self, tag: &str, passed: bool) {
        self.checks.push(Check { tag: tag.into(), passed, advisory: true });
    }

    pub fn violated(&self) -> bool {
        self.checks.iter().any(|c| !c.passed && !c.advisory)
    }

    /// Sets the CSV table from serializable rows with an explicit header.
    pub fn table<T: Serialize>(&mut self, header: &[&str], rows: &[T]) -> anyhow::Result<()> {
        self.csv_header = header.iter().map(|s| s.to_string()).collect();
        self.csv_rows = rows
            .iter()
            .map(|r| {
                let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(vec![]);
                w.serialize(r)?;
                let bytes = w.into_inner()?;
                let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(bytes.as_slice());
                let rec = rd.records().next().transpose()?.unwrap_or_default();
                Ok(rec.iter().map(str::to_string).collect())
            })
            .collect::<anyhow::Result<_>>()?;
        Ok(())
    }

    fn checks_json(&self) -> Value {
        Value::Array(self.checks.iter().map(|c| json!({"tag": c.tag, "passed": c.passed, "advisory": c.advisory})).collect())
    }

    pub fn render(&self, format: Format) -> anyhow::Result<Vec<u8>> {
        match format {
            Format::Json => {
                let doc = json!({
                    "command": self.command,
                    "config": self.config,
                    "version": env!("CARGO_PKG_VERSION"),
                    "checks": self.checks_json(),
                    "data": self.data,
                });
                let mut out = serde_json::to_vec_pretty(&doc)?;
                out.push(b'\n');
                Ok(out)
            }
            Format::Csv => {
                let mut out = Vec::new();
                writeln!(out, "# moelab {} {}", env!("CARGO_PKG_VERSION"), self.command)?;
                writeln!(out, "# config: {}", serde_json::to_string(&self.config)?)?;
                for c in &self.checks {
                    let status = if c.passed { "pass" } else { "FAIL" };
                    let kind = if c.advisory { " (advisory)" } else { "" };
                    writeln!(out, "# check: {status}{kind} {}", c.tag)?;
                }
                let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
                if !self.csv_header.is_empty() {
                    w.write_record(&self.csv_header)?;
                }
                for r in &self.csv_rows {
                    w.write_record(r)?;
                }
                Ok(w.into_inner()?)
            }
        }
    }
}

/// Explicit path, else `$MOELAB_OUT_DIR/<command>.<ext>`, else stdout.
pub fn destination(output: Option<PathBuf>, command: &str, format: Format) -> Option<PathBuf> {
    output.or_else(|| {
        std::env::var_os(OUT_DIR_ENV)
            .filter(|d| !d.is_empty())
            .map(|d| PathBuf::from(d).join(format!("{command}.{}", format.extension())))
    })
}

pub fn write(bytes: &[u8], dest: Option<&PathBuf>) -> anyhow::Result<()> {
    match dest {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, bytes)?;
        }
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

/// Formats a possibly non-finite float for CSV cells and JSON.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        Value::Null
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}
