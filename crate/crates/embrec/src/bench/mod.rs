//! Timing harness, benchmark scenarios and report files.

mod report;
mod runner;
mod timing;

pub use report::{report_emit, report_parse_csv, report_parse_json, BenchReport, CsvRow, ReportFormat, StorageReport, CSV_HEADER};
pub use runner::{populate, run_benchmark, run_benchmarks, synthetic_workload, BenchDoc, BenchMode, Scenario};
pub use timing::{time_interleaved, time_interleaved_with, time_stage, time_stage_with, Clock, MonotonicClock, StageOptions, Timed, DEFAULT_REPS, DEFAULT_WARMUP};

use crate::store::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("recycled output differs from the full pass: {0}")]
    Equivalence(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Model(#[from] embrec_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
