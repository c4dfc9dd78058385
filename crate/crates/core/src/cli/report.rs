//! Experiment reports: pass/fail checks, metrics and a CSV detail table.

use std::io::Write;
use std::path::Path as FsPath;

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Rows of the detail CSV; every cell is already formatted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip representation, so CSVs compare byte for byte.
pub fn cell(v: f64) -> String {
    v.to_string()
}

pub fn coords(x: &[f64]) -> Vec<String> {
    x.iter().map(|v| cell(*v)).collect()
}

pub fn coord_header(prefix: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("{prefix}{i}")).collect()
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub checks: Vec<Check>,
    pub metrics: Map<String, Value>,
    pub detail: Table,
}

impl Report {
    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.to_string(), passed, detail: detail.into() });
    }

    pub fn metric(&mut self, name: &str, value: impl Serialize) {
        self.metrics.insert(name.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self, config: &ExperimentConfig) -> Value {
        json!({
            "version": VERSION,
            "experiment": config.experiment.name(),
            "passed": self.passed(),
            "checks": self.checks,
            "metrics": self.metrics,
            "config": config,
        })
    }

    /// Writes `summary.json` and `detail.csv` under `config.output_path`.
    pub fn write(&self, config: &ExperimentConfig) -> std::io::Result<()> {
        let dir: &FsPath = &config.output_path;
        std::fs::create_dir_all(dir)?;
        let summary = serde_json::to_string_pretty(&self.summary(config))?;
        std::fs::write(dir.join("summary.json"), summary + "\n")?;
        let file = std::fs::File::create(dir.join("detail.csv"))?;
        self.detail.write_csv(std::io::BufWriter::new(file)).map_err(std::io::Error::other)
    }
}
