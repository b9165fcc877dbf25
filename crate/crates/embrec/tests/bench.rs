use std::sync::Arc;

use embrec::bench::{
    populate, report_emit, report_parse_csv, report_parse_json, run_benchmark, run_benchmarks, synthetic_workload,
    BenchError, BenchMode, ReportFormat, Scenario, CSV_HEADER,
};
use embrec::store::{ActivationStore, CacheKey, DiskStore, EntryMeta, MemStore, Mode, StoreError};
use embrec_core::{ActivationTensor, Dtype, Model, ModelConfig};

fn cfg() -> ModelConfig {
    ModelConfig { n_layers: 4, d_model: 16, n_heads: 2, d_ff: 32, vocab_size: 50, max_seq: 16, ln_eps: 1e-5, seed: 11 }
}

fn scenario(mode: BenchMode) -> Scenario {
    let mut s = Scenario::new(cfg(), 2, mode);
    s.batch = 3;
    s.seq_len = 10;
    s.reps = 3;
    s.warmup = 1;
    s
}

fn disk(dir: &std::path::Path, dtype: Dtype, model: &Model, s: &Scenario) -> Arc<dyn ActivationStore> {
    let docs = synthetic_workload(&s.config, s.batch, s.seq_len);
    let mut store = DiskStore::create(dir, dtype).unwrap();
    assert_eq!(populate(&mut store, model, s.k, &docs).unwrap(), 3);
    assert_eq!(populate(&mut store, model, s.k, &docs).unwrap(), 0);
    drop(store);
    Arc::new(DiskStore::open(dir, Mode::Read).unwrap())
}

#[test]
fn workload_is_deterministic_and_prefix_stable() {
    let a = synthetic_workload(&cfg(), 5, 10);
    let b = synthetic_workload(&cfg(), 2, 10);
    assert_eq!(a[..2], b[..]);
    assert_eq!(a[0].doc_id, "bench-s10-0000");
    assert!(a.iter().all(|d| d.tokens.len() == 10 && d.tokens.iter().all(|&t| t < 50)));
}

#[test]
fn mode_names() {
    for m in BenchMode::ALL {
        assert_eq!(m.name().parse::<BenchMode>().unwrap(), m);
        assert_eq!(m.name().replace('_', "-").parse::<BenchMode>().unwrap(), m);
    }
    assert!(matches!("fast".parse::<BenchMode>(), Err(BenchError::Invalid(_))));
    assert_eq!(serde_json::to_string(&BenchMode::RecycleDiskPrefetch).unwrap(), "\"recycle_disk_prefetch\"");
}

#[test]
fn full_mode_reports_zero_speedup() {
    let model = Model::init(cfg()).unwrap();
    let s = scenario(BenchMode::Full);
    let docs = synthetic_workload(&s.config, s.batch, s.seq_len);
    let r = run_benchmark(&model, &s, &docs, None).unwrap();
    assert_eq!(r.variant, r.baseline);
    assert_eq!((r.measured_speedup_pct, r.theoretical_speedup_pct, r.wait_time_ms), (0.0, 0.0, 0.0));
    assert_eq!(r.baseline.reps, 3);
}

#[test]
fn every_recycle_mode_passes_the_gate() {
    let model = Model::init(cfg()).unwrap();
    for dtype in [Dtype::F32, Dtype::F16] {
        let dir = tempfile::tempdir().unwrap();
        let base = scenario(BenchMode::RecycleRam);
        let store = disk(dir.path(), dtype, &model, &base);
        let mut prefetch = scenario(BenchMode::RecycleDiskPrefetch);
        prefetch.prefetch_depth = 2;
        let scenarios = [base.clone(), scenario(BenchMode::RecycleDisk), prefetch, scenario(BenchMode::Full)];
        let docs = synthetic_workload(&base.config, base.batch, base.seq_len);
        let reports = run_benchmarks(&model, &scenarios, &docs, Some(store)).unwrap();
        assert_eq!(reports.len(), 4);
        for (r, s) in reports.iter().zip(&scenarios) {
            assert_eq!(&r.scenario, s);
            assert_eq!(r.baseline, reports[0].baseline);
            assert_eq!(r.storage.dtype, dtype);
            assert_eq!(r.storage.bytes_per_seq, 10 * 16 * dtype.bytes_per_element() as u64);
            if s.mode.is_recycle() {
                assert_eq!(r.theoretical_speedup_pct, 100.0);
                assert_eq!(r.variant.reps, 3);
                assert!(r.measured_speedup_pct.is_finite());
            }
        }
    }
}

#[test]
fn k_at_or_above_n_is_invalid() {
    let model = Model::init(cfg()).unwrap();
    let mut s = scenario(BenchMode::RecycleRam);
    s.k = 4;
    let docs = synthetic_workload(&s.config, s.batch, s.seq_len);
    let store: Arc<dyn ActivationStore> = Arc::new(MemStore::new(Dtype::F32));
    assert!(matches!(run_benchmark(&model, &s, &docs, Some(store)), Err(BenchError::Invalid(_))));
}

#[test]
fn missing_entries_are_not_found() {
    let model = Model::init(cfg()).unwrap();
    let s = scenario(BenchMode::RecycleDisk);
    let docs = synthetic_workload(&s.config, s.batch, s.seq_len);
    let store: Arc<dyn ActivationStore> = Arc::new(MemStore::new(Dtype::F32));
    let err = run_benchmark(&model, &s, &docs, Some(store)).unwrap_err();
    assert!(matches!(err, BenchError::Store(StoreError::NotFound(_))), "{err}");
}

/// Serves entries with one element shifted.
struct Tampered(MemStore);

impl ActivationStore for Tampered {
    fn dtype(&self) -> Dtype {
        self.0.dtype()
    }
    fn put(&mut self, key: CacheKey, t: &ActivationTensor) -> Result<EntryMeta, StoreError> {
        self.0.put(key, t)
    }
    fn get(&self, key: &CacheKey) -> Result<ActivationTensor, StoreError> {
        let t = self.0.get(key)?;
        let mut data = t.data().to_vec();
        data[0] += 0.5;
        Ok(ActivationTensor::new(t.seq_len(), t.dim(), data)?)
    }
    fn meta(&self, key: &CacheKey) -> Option<EntryMeta> {
        self.0.meta(key)
    }
    fn keys(&self) -> Vec<CacheKey> {
        self.0.keys()
    }
    fn len(&self) -> usize {
        self.0.len()
    }
}

#[test]
fn mismatching_cache_is_refused() {
    let model = Model::init(cfg()).unwrap();
    let s = scenario(BenchMode::RecycleDisk);
    let docs = synthetic_workload(&s.config, s.batch, s.seq_len);
    let mut mem = MemStore::new(Dtype::F32);
    populate(&mut mem, &model, s.k, &docs).unwrap();
    let store: Arc<dyn ActivationStore> = Arc::new(Tampered(mem));
    let err = run_benchmark(&model, &s, &docs, Some(store)).unwrap_err();
    assert!(matches!(err, BenchError::Equivalence(_)), "{err}");
}

#[test]
fn reports_round_trip() {
    let model = Model::init(cfg()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(BenchMode::RecycleDisk);
    let store = disk(&dir.path().join("store"), Dtype::F32, &model, &s);
    let docs = synthetic_workload(&s.config, s.batch, s.seq_len);
    let report = run_benchmark(&model, &s, &docs, Some(store)).unwrap();

    let json = dir.path().join("r.json");
    report_emit(&report, ReportFormat::Json, &json).unwrap();
    assert_eq!(report_parse_json(&json).unwrap(), report);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    for field in [
        "scenario",
        "baseline",
        "variant",
        "measured_speedup_pct",
        "mean_run_speedup_pct",
        "theoretical_speedup_pct",
        "wait_time_ms",
        "storage",
    ] {
        assert!(v.get(field).is_some(), "missing {field}");
    }
    assert_eq!(v["storage"]["bytes_per_token"], 64);

    let csv = dir.path().join("r.csv");
    report_emit(&report, ReportFormat::Csv, &csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    let rows = report_parse_csv(&csv).unwrap();
    assert_eq!(rows, vec![report.csv_row()]);
    assert_eq!(rows[0].mode, "recycle_disk");

    assert!(matches!("xml".parse::<ReportFormat>(), Err(BenchError::Invalid(_))));
}
