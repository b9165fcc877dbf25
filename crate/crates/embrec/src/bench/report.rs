use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;

use embrec_core::{Dtype, TimingStats};
use serde::{Deserialize, Serialize};

use super::runner::Scenario;
use super::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    pub dtype: Dtype,
    pub bytes_per_seq: u64,
    pub bytes_per_token: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: Scenario,
    pub baseline: TimingStats,
    pub variant: TimingStats,
    /// From the mean timings: `(baseline.mean / variant.mean - 1) * 100`.
    pub measured_speedup_pct: f64,
    /// Mean of the per-rep speedups, pairing rep `i` of each stage.
    pub mean_run_speedup_pct: f64,
    pub theoretical_speedup_pct: f64,
    /// Mean per-batch time spent waiting on cache reads.
    pub wait_time_ms: f64,
    pub storage: StorageReport,
}

pub const CSV_HEADER: [&str; 14] = [
    "mode",
    "N",
    "k",
    "d_model",
    "batch",
    "seq_len",
    "baseline_mean_ms",
    "baseline_stdev_ms",
    "variant_mean_ms",
    "variant_stdev_ms",
    "speedup_pct",
    "theoretical_pct",
    "wait_ms",
    "bytes_per_seq",
];

/// One CSV line of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub mode: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub k: usize,
    pub d_model: usize,
    pub batch: usize,
    pub seq_len: usize,
    pub baseline_mean_ms: f64,
    pub baseline_stdev_ms: f64,
    pub variant_mean_ms: f64,
    pub variant_stdev_ms: f64,
    pub speedup_pct: f64,
    pub theoretical_pct: f64,
    pub wait_ms: f64,
    pub bytes_per_seq: u64,
}

impl BenchReport {
    pub fn csv_row(&self) -> CsvRow {
        let s = &self.scenario;
        CsvRow {
            mode: s.mode.to_string(),
            n: s.config.n_layers,
            k: s.k,
            d_model: s.config.d_model,
            batch: s.batch,
            seq_len: s.seq_len,
            baseline_mean_ms: self.baseline.mean_ms,
            baseline_stdev_ms: self.baseline.stdev_ms,
            variant_mean_ms: self.variant.mean_ms,
            variant_stdev_ms: self.variant.stdev_ms,
            speedup_pct: self.measured_speedup_pct,
            theoretical_pct: self.theoretical_speedup_pct,
            wait_ms: self.wait_time_ms,
            bytes_per_seq: self.storage.bytes_per_seq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(BenchError::Invalid(format!("unknown report format {other:?}; expected json or csv"))),
        }
    }
}

/// Writes `report` to `path`: a single JSON object, or a CSV header plus one row.
pub fn report_emit(report: &BenchReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let out = BufWriter::new(File::create(path.as_ref())?);
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(out, report)?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.serialize(report.csv_row())?;
            w.flush()?;
        }
    }
    Ok(())
}

pub fn report_parse_json(path: impl AsRef<Path>) -> Result<BenchReport> {
    Ok(serde_json::from_reader(File::open(path.as_ref())?)?)
}

pub fn report_parse_csv(path: impl AsRef<Path>) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(BenchError::Invalid(format!("unexpected csv header {header:?}")));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
