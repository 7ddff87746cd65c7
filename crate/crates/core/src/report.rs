//! Tabular experiment output with provenance.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::io::write_file;

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportProvenance {
    pub experiment: String,
    pub seed: u64,
    /// Input name to SHA-256 of its canonical serialization.
    pub inputs: BTreeMap<String, String>,
    pub config: Value,
    pub tool_version: String,
}

/// One long-format value; `plan_index` is `None` for ensemble-level rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub plan_index: Option<usize>,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub provenance: ReportProvenance,
    pub rows: Vec<MetricRow>,
    /// Named CSV tables (confusion matrices, histograms, maps).
    pub tables: BTreeMap<String, String>,
    pub summary: BTreeMap<String, Value>,
}

impl MetricReport {
    pub fn new(experiment: &str, seed: u64, config: Value) -> Self {
        MetricReport {
            provenance: ReportProvenance {
                experiment: experiment.to_string(),
                seed,
                inputs: BTreeMap::new(),
                config,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            },
            rows: Vec::new(),
            tables: BTreeMap::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, name: &str, canonical_bytes: &[u8]) {
        self.provenance
            .inputs
            .insert(name.to_string(), sha256_hex(canonical_bytes));
    }

    pub fn push(&mut self, plan_index: Option<usize>, metric: impl Into<String>, value: f64) {
        self.rows.push(MetricRow {
            plan_index,
            metric: metric.into(),
            value,
        });
    }

    /// `plan_index,metric,value`, empty plan index for ensemble-level rows.
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("plan_index,metric,value\n");
        for r in &self.rows {
            let idx = r.plan_index.map(|i| i.to_string()).unwrap_or_default();
            out.push_str(&format!("{idx},{},{}\n", csv_field(&r.metric), r.value));
        }
        out
    }

    /// Provenance and summary, without the per-plan rows.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            provenance: &'a ReportProvenance,
            summary: &'a BTreeMap<String, Value>,
            tables: Vec<&'a String>,
            n_rows: usize,
        }
        let mut s = serde_json::to_string_pretty(&Summary {
            provenance: &self.provenance,
            summary: &self.summary,
            tables: self.tables.keys().collect(),
            n_rows: self.rows.len(),
        })?;
        s.push('\n');
        Ok(s)
    }

    /// Everything, as one JSON document.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `metrics.csv`, `summary.json`, and `<table>.csv` per table.
    pub fn write_csv_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        write_file(&dir.join("metrics.csv"), self.rows_csv().as_bytes())?;
        write_file(&dir.join("summary.json"), self.summary_json()?.as_bytes())?;
        for (name, table) in &self.tables {
            write_file(&dir.join(format!("{name}.csv")), table.as_bytes())?;
        }
        Ok(())
    }

    /// Writes the whole report as `report.json`.
    pub fn write_json_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        write_file(&dir.as_ref().join("report.json"), self.to_json()?.as_bytes())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
