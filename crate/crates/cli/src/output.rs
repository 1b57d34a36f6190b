use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::Status;

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// A CSV table; every table has a header row even when empty.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()
    }
}

/// `prefix_1 .. prefix_k`.
pub fn columns(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}_{i}")).collect()
}

/// Leading columns shared by per-point tables.
pub fn point_columns(n: usize) -> Vec<String> {
    let mut h = vec!["index".to_string()];
    h.extend(columns("p", n));
    h.extend(columns("q", n));
    h
}

pub fn point_cells(index: usize, p: &[f64], q: &[f64]) -> Vec<String> {
    let mut r = vec![index.to_string()];
    r.extend(p.iter().copied().map(num));
    r.extend(q.iter().copied().map(num));
    r
}

/// Fixed-width list of optional values (blank cells when missing).
pub fn padded(values: Option<&[f64]>, k: usize) -> Vec<String> {
    (0..k).map(|i| values.and_then(|v| v.get(i)).copied().map(num).unwrap_or_default()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub timestamp_unix: u64,
    pub elapsed_seconds: f64,
    pub workers: usize,
    pub bit_repro: bool,
}

/// `report.json`. Everything except `metadata` is a function of the config
/// and seed.
#[derive(Debug, Clone, Serialize)]
pub struct Report<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: &'a ExperimentConfig,
    pub resolved: Value,
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<String>,
    pub result: Value,
    pub metadata: Metadata,
}

impl Report<'_> {
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut s = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        s.push('\n');
        std::fs::write(path, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -0.0, 2.5] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(num(0.5), "0.5");
        assert_eq!(num(1e-12), "1e-12");
    }
}
