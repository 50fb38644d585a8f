//! Sweep output rows and their CSV/JSON encodings.
//!
//! The CSV header is a fixed contract for plotting scripts and CI diffs.
//! Every column except `time_us_median` is deterministic for a fixed
//! config and seed.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::Method;

pub const CSV_HEADER: &str = "method,alpha,n,d,dv,page_size,budget_tokens,coverage,seed,trial,delta_mean,delta_p95,rho_mean,rel_err_mean,rel_err_p95,bound_slack_min,kv_bytes_sparse,kv_bytes_full,time_us_median";

/// One (method, n, budget, trial) row. Per-step metrics are aggregated
/// over the trial's query stream; `budget_tokens` is 0 for methods whose
/// coverage is adaptive rather than budgeted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: Method,
    pub alpha: f64,
    pub n: usize,
    pub d: usize,
    pub dv: usize,
    pub page_size: usize,
    pub budget_tokens: usize,
    pub coverage: f64,
    pub seed: u64,
    pub trial: usize,
    pub delta_mean: f64,
    pub delta_p95: f64,
    pub rho_mean: f64,
    pub rel_err_mean: f64,
    pub rel_err_p95: f64,
    pub bound_slack_min: f64,
    pub kv_bytes_sparse: u64,
    pub kv_bytes_full: u64,
    pub time_us_median: f64,
}

impl BenchRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method.name(),
            self.alpha,
            self.n,
            self.d,
            self.dv,
            self.page_size,
            self.budget_tokens,
            self.coverage,
            self.seed,
            self.trial,
            self.delta_mean,
            self.delta_p95,
            self.rho_mean,
            self.rel_err_mean,
            self.rel_err_p95,
            self.bound_slack_min,
            self.kv_bytes_sparse,
            self.kv_bytes_full,
            self.time_us_median,
        )
    }
}

pub fn write_csv<W: Write>(records: &[BenchRecord], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for record in records {
        writeln!(w, "{}", record.csv_row())?;
    }
    Ok(())
}

/// JSON mirror of the CSV: an array of objects with the same fields.
pub fn write_json<W: Write>(records: &[BenchRecord], w: &mut W) -> std::io::Result<()> {
    let body = serde_json::to_string_pretty(records)?;
    writeln!(w, "{body}")
}

/// Nearest-rank percentile of an unsorted sample (p in [0, 1]).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("metrics are finite"));
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 0.5)
}
