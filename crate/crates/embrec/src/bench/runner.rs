use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use embrec_core::{
    entry_size, speedup_pct, theoretical_speedup_pct, ActivationTensor, Dtype, Model, ModelConfig, Rng,
};
use serde::{Deserialize, Serialize};

use super::report::{BenchReport, StorageReport};
use super::timing::{time_interleaved, StageOptions, Timed};
use super::{BenchError, Result};
use crate::store::{prefetch_iter, ActivationStore, CacheKey, MemStore, SlowReads, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Full,
    RecycleRam,
    RecycleDisk,
    RecycleDiskPrefetch,
}

impl BenchMode {
    pub const ALL: [BenchMode; 4] =
        [BenchMode::Full, BenchMode::RecycleRam, BenchMode::RecycleDisk, BenchMode::RecycleDiskPrefetch];

    pub fn name(self) -> &'static str {
        match self {
            BenchMode::Full => "full",
            BenchMode::RecycleRam => "recycle_ram",
            BenchMode::RecycleDisk => "recycle_disk",
            BenchMode::RecycleDiskPrefetch => "recycle_disk_prefetch",
        }
    }

    pub fn is_recycle(self) -> bool {
        self != BenchMode::Full
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchMode {
    type Err = BenchError;

    /// Accepts `recycle_ram` and `recycle-ram` spellings.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| BenchError::Invalid(format!("unknown bench mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ModelConfig,
    /// Cached layer; ignored by [`BenchMode::Full`].
    pub k: usize,
    pub batch: usize,
    pub seq_len: usize,
    pub mode: BenchMode,
    pub prefetch_depth: usize,
    pub reps: usize,
    pub warmup: usize,
    /// Sleep injected before every cache read.
    #[serde(default)]
    pub read_delay_ms: u64,
}

impl Scenario {
    pub fn new(config: ModelConfig, k: usize, mode: BenchMode) -> Self {
        let stage = StageOptions::default();
        Self {
            config,
            k,
            batch: 8,
            seq_len: 128,
            mode,
            prefetch_depth: 0,
            reps: stage.reps,
            warmup: stage.warmup,
            read_delay_ms: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let n = self.config.n_layers;
        if self.mode.is_recycle() && self.k >= n {
            return Err(BenchError::Invalid(format!(
                "k={} leaves no layers to run in a {n}-layer model; use 0 <= k < {n}",
                self.k
            )));
        }
        if self.k > n {
            return Err(BenchError::Invalid(format!("k={} exceeds n_layers={n}", self.k)));
        }
        if self.batch == 0 || self.seq_len == 0 || self.reps == 0 {
            return Err(BenchError::Invalid("batch, seq_len and reps must be >= 1".into()));
        }
        if self.seq_len > self.config.max_seq {
            return Err(BenchError::Invalid(format!(
                "seq_len {} exceeds max_seq {}",
                self.seq_len, self.config.max_seq
            )));
        }
        Ok(())
    }

    fn stage(&self) -> StageOptions {
        StageOptions { reps: self.reps, warmup: self.warmup }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchDoc {
    pub doc_id: String,
    pub tokens: Vec<u32>,
}

/// Deterministic documents for benchmarking. Document `i` does not depend on
/// `batch`, so a store built for a large batch serves smaller ones.
pub fn synthetic_workload(config: &ModelConfig, batch: usize, seq_len: usize) -> Vec<BenchDoc> {
    let mut rng = Rng::new(0xB3AC_0000 ^ seq_len as u64);
    let vocab = config.vocab_size as u64;
    (0..batch)
        .map(|i| BenchDoc {
            doc_id: format!("bench-s{seq_len}-{i:04}"),
            tokens: (0..seq_len).map(|_| (rng.next_u64() % vocab) as u32).collect(),
        })
        .collect()
}

fn key_for(model_id: &str, k: usize, doc: &BenchDoc) -> CacheKey {
    CacheKey::new(model_id, k, doc.doc_id.as_str())
}

/// Caches `h^k` for every document not already in `store`. Returns how many
/// entries were written.
pub fn populate<S: ActivationStore + ?Sized>(store: &mut S, model: &Model, k: usize, docs: &[BenchDoc]) -> Result<usize> {
    let model_id = model.model_id();
    let mut written = 0;
    for doc in docs {
        let key = key_for(&model_id, k, doc);
        if store.contains(&key) {
            continue;
        }
        let h = model.forward_range(model.embed(&doc.tokens)?, 0, k)?;
        store.put(key, &h)?;
        written += 1;
    }
    Ok(written)
}

type BatchOut = (Vec<ActivationTensor>, f64);

/// Times the full pass against the scenario's variant over one batch.
///
/// For recycle modes `store` must hold `h^k` for every document. The variant's
/// outputs are checked against the full pass before any timing is returned:
/// bitwise for `f32` stores, and against the full pass resumed from the
/// `f16`-rounded activations for `f16` stores.
pub fn run_benchmark(
    model: &Model,
    scenario: &Scenario,
    docs: &[BenchDoc],
    store: Option<Arc<dyn ActivationStore>>,
) -> Result<BenchReport> {
    let mut reports = run_benchmarks(model, std::slice::from_ref(scenario), docs, store)?;
    Ok(reports.remove(0))
}

/// Like [`run_benchmark`] for several variants of one workload. Reps of the
/// full pass and of every variant are interleaved, and all reports share the
/// same baseline timings, so variants can be compared with each other.
///
/// The scenarios must agree on config, batch, seq_len, reps and warmup.
pub fn run_benchmarks(
    model: &Model,
    scenarios: &[Scenario],
    docs: &[BenchDoc],
    store: Option<Arc<dyn ActivationStore>>,
) -> Result<Vec<BenchReport>> {
    let first = scenarios.first().ok_or_else(|| BenchError::Invalid("no scenarios".into()))?;
    for s in scenarios {
        s.validate()?;
        if (&s.config, s.batch, s.seq_len, s.reps, s.warmup)
            != (&first.config, first.batch, first.seq_len, first.reps, first.warmup)
        {
            return Err(BenchError::Invalid("scenarios differ in config, batch, seq_len, reps or warmup".into()));
        }
    }
    if model.config() != &first.config {
        return Err(BenchError::Invalid("model was not built from the scenario config".into()));
    }
    if docs.len() != first.batch {
        return Err(BenchError::Invalid(format!("{} documents for a batch of {}", docs.len(), first.batch)));
    }
    if let Some(doc) = docs.iter().find(|d| d.tokens.len() != first.seq_len) {
        return Err(BenchError::Invalid(format!(
            "document {} has {} tokens, scenario seq_len is {}",
            doc.doc_id,
            doc.tokens.len(),
            first.seq_len
        )));
    }
    let n = model.n_layers();
    let model_id = model.model_id();
    let dtype = store.as_ref().map_or(Dtype::F32, |s| s.dtype());
    let storage = StorageReport::new(first.seq_len, first.config.d_model, dtype)?;

    struct Variant {
        index: usize,
        k: usize,
        store: Arc<dyn ActivationStore>,
        keys: Vec<CacheKey>,
        depth: usize,
    }
    let mut variants = Vec::new();
    for (index, scenario) in scenarios.iter().enumerate().filter(|(_, s)| s.mode.is_recycle()) {
        let k = scenario.k;
        let base = store
            .clone()
            .ok_or_else(|| BenchError::Invalid(format!("mode {} needs a store", scenario.mode)))?;
        let keys: Vec<CacheKey> = docs.iter().map(|d| key_for(&model_id, k, d)).collect();
        if let Some(missing) = keys.iter().find(|key| !base.contains(key)) {
            return Err(StoreError::NotFound(format!("{missing} (populate the store at layer {k})")).into());
        }
        let store: Arc<dyn ActivationStore> = match scenario.mode {
            BenchMode::RecycleRam => Arc::new(MemStore::load_from(&*base, &keys)?),
            _ if scenario.read_delay_ms > 0 => {
                Arc::new(SlowReads::new(base, Duration::from_millis(scenario.read_delay_ms)))
            }
            _ => base,
        };
        let depth = match scenario.mode {
            BenchMode::RecycleDiskPrefetch => scenario.prefetch_depth,
            _ => 0,
        };
        variants.push(Variant { index, k, store, keys, depth });
    }

    let mut full_pass = || {
        let outs = docs.iter().map(|d| model.full_forward(&d.tokens)).collect::<Result<Vec<_>, _>>()?;
        Ok::<BatchOut, BenchError>((outs, 0.0))
    };
    let mut recycled: Vec<Box<dyn FnMut() -> Result<BatchOut> + '_>> = variants
        .iter()
        .map(|v| {
            Box::new(move || {
                let mut outs = Vec::with_capacity(v.keys.len());
                let mut wait_ms = 0.0;
                let mut it = prefetch_iter(Arc::clone(&v.store), v.keys.clone(), v.depth);
                loop {
                    let t0 = Instant::now();
                    let Some(item) = it.next() else { break };
                    wait_ms += t0.elapsed().as_secs_f64() * 1e3;
                    let (_, h) = item?;
                    outs.push(model.forward_range(h, v.k, n)?);
                }
                Ok((outs, wait_ms))
            }) as Box<dyn FnMut() -> Result<BatchOut> + '_>
        })
        .collect();
    let mut stages: Vec<&mut dyn FnMut() -> Result<BatchOut>> = vec![&mut full_pass];
    stages.extend(recycled.iter_mut().map(|f| &mut **f as &mut dyn FnMut() -> Result<BatchOut>));

    log::info!(
        "timing full pass and {} variant(s): {} x {} tokens, {} reps",
        variants.len(),
        first.batch,
        first.seq_len,
        first.reps
    );
    let mut timed: Vec<Timed<BatchOut>> = time_interleaved(first.stage(), &mut stages)?;
    drop(stages);
    let variant_timed = timed.split_off(1);
    let baseline = timed.pop().expect("baseline stage");
    let reference = &baseline.outputs.last().expect("reps >= 1").0;

    let mut reports: Vec<Option<BenchReport>> = vec![None; scenarios.len()];
    for (v, t) in variants.iter().zip(variant_timed) {
        check_equivalence(model, docs, v.k, dtype, reference, &t.outputs.last().expect("reps >= 1").0)?;
        let per_run = baseline
            .stats
            .per_rep_ms
            .iter()
            .zip(&t.stats.per_rep_ms)
            .map(|(&b, &v)| speedup_pct(b, v))
            .collect::<Result<Vec<_>, _>>()?;
        let wait = t.outputs.iter().map(|(_, w)| *w).sum::<f64>() / t.outputs.len() as f64;
        reports[v.index] = Some(BenchReport {
            scenario: scenarios[v.index].clone(),
            baseline: baseline.stats.clone(),
            measured_speedup_pct: speedup_pct(baseline.stats.mean_ms, t.stats.mean_ms)?,
            mean_run_speedup_pct: per_run.iter().sum::<f64>() / per_run.len() as f64,
            theoretical_speedup_pct: theoretical_speedup_pct(v.k, n)?,
            variant: t.stats,
            wait_time_ms: wait,
            storage: storage.clone(),
        });
    }
    Ok(scenarios
        .iter()
        .zip(reports)
        .map(|(s, r)| {
            r.unwrap_or_else(|| BenchReport {
                scenario: s.clone(),
                baseline: baseline.stats.clone(),
                variant: baseline.stats.clone(),
                measured_speedup_pct: 0.0,
                mean_run_speedup_pct: 0.0,
                theoretical_speedup_pct: 0.0,
                wait_time_ms: 0.0,
                storage: storage.clone(),
            })
        })
        .collect())
}

fn check_equivalence(
    model: &Model,
    docs: &[BenchDoc],
    k: usize,
    dtype: Dtype,
    full: &[ActivationTensor],
    recycled: &[ActivationTensor],
) -> Result<()> {
    if full.len() != recycled.len() {
        return Err(BenchError::Equivalence(format!("{} outputs vs {}", recycled.len(), full.len())));
    }
    for (i, (doc, got)) in docs.iter().zip(recycled).enumerate() {
        let expected = match dtype {
            Dtype::F32 => full[i].clone(),
            Dtype::F16 => {
                let h = model.forward_range(model.embed(&doc.tokens)?, 0, k)?.quantize(Dtype::F16)?;
                model.forward_range(h, k, model.n_layers())?
            }
        };
        if !got.bit_eq(&expected) {
            return Err(BenchError::Equivalence(format!(
                "document {}: checksum {:08x}, expected {:08x}",
                doc.doc_id,
                got.checksum(),
                expected.checksum()
            )));
        }
    }
    Ok(())
}

impl StorageReport {
    fn new(seq_len: usize, dim: usize, dtype: Dtype) -> Result<Self> {
        Ok(Self {
            dtype,
            bytes_per_seq: entry_size(seq_len, dim, dtype)?,
            bytes_per_token: entry_size(1, dim, dtype)?,
        })
    }
}
