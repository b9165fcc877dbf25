//! `embrec` command line.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use embrec_core::{ActivationTensor, Dtype, Model, ModelConfig};
use serde::Deserialize;

use crate::bench::{self, BenchError, BenchMode, ReportFormat, Scenario};
use crate::store::{self, ActivationStore, CacheKey, DiskStore, Mode, StoreError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "embrec", version, about = "Cache transformer activations and resume the forward pass from them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run layers 1..=k over a corpus and cache the results.
    Build {
        #[arg(long, value_name = "JSON")]
        model_config: PathBuf,
        #[arg(long, value_name = "JSONL")]
        corpus: PathBuf,
        #[arg(long, value_name = "K")]
        layer: usize,
        #[arg(long, default_value = "f32", value_parser = parse_dtype)]
        dtype: Dtype,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Checksum every entry of a store.
    Verify {
        #[arg(long, value_name = "DIR")]
        store: PathBuf,
    },
    /// Time the full pass against a recycled one and write a report.
    Bench {
        #[arg(long, value_name = "JSON")]
        model_config: PathBuf,
        #[arg(long, value_name = "DIR")]
        store: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, value_parser = parse_mode)]
        mode: BenchMode,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long, default_value_t = 128)]
        seq: usize,
        #[arg(long, default_value_t = bench::DEFAULT_REPS)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        prefetch: usize,
        #[arg(long, value_name = "PATH")]
        json: PathBuf,
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
        #[arg(long, value_name = "MS", default_value_t = 0)]
        inject_read_delay_ms: u64,
    },
    /// Print metadata and summary statistics of cached entries for a document.
    Inspect {
        #[arg(long, value_name = "DIR")]
        store: PathBuf,
        #[arg(long)]
        doc: String,
    },
    /// Show that a recycled pass reproduces the full pass bit for bit.
    Demo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_dtype(s: &str) -> Result<Dtype, String> {
    s.parse().map_err(|e: embrec_core::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<BenchMode, String> {
    s.parse().map_err(|e: BenchError| e.to_string())
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failure(String),
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Invalid(_) => CliError::Usage(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

impl From<embrec_core::Error> for CliError {
    fn from(e: embrec_core::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
/// Returns 0 on success, 1 on operational failure and 2 on usage errors.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Build { model_config, corpus, layer, dtype, out } => {
            build(&model_config, &corpus, layer, dtype, &out)
        }
        Command::Verify { store } => verify(&store),
        Command::Bench {
            model_config,
            store,
            k,
            mode,
            batch,
            seq,
            reps,
            prefetch,
            json,
            csv,
            inject_read_delay_ms,
        } => {
            let config = load_config(&model_config);
            config.and_then(|config| {
                let mut scenario = Scenario::new(config, k, mode);
                scenario.batch = batch;
                scenario.seq_len = seq;
                scenario.reps = reps;
                scenario.prefetch_depth = prefetch;
                scenario.read_delay_ms = inject_read_delay_ms;
                run_bench(scenario, &store, &json, csv.as_deref())
            })
        }
        Command::Inspect { store, doc } => inspect(&store, &doc),
        Command::Demo { seed } => demo(seed),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `embrec --help` for usage");
            EXIT_USAGE
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
    }
}

fn init_logging() {
    let filter = std::env::var("EMBREC_LOG").unwrap_or_else(|_| "warn".into());
    let _ = env_logger::Builder::new().parse_filters(&filter).format_timestamp(None).try_init();
}

fn load_config(path: &Path) -> CliResult<ModelConfig> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let config: ModelConfig = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("bad model config {}: {e}", path.display())))?;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusRecord {
    doc_id: String,
    #[serde(default)]
    tokens: Option<Vec<u32>>,
    #[serde(default)]
    text: Option<String>,
}

/// Reads a JSONL corpus into `(doc_id, tokens)` pairs, splitting records
/// longer than `max_seq` into windows suffixed `#w<i>`.
fn read_corpus(path: &Path, config: &ModelConfig) -> CliResult<Vec<(String, Vec<u32>)>> {
    let usage = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let file = File::open(path).map_err(|e| usage(e.to_string()))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| usage(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord =
            serde_json::from_str(&line).map_err(|e| usage(format!("line {}: {e}", i + 1)))?;
        let tokens = match (rec.tokens, rec.text) {
            (Some(t), None) => t,
            (None, Some(text)) => {
                if config.vocab_size < 256 {
                    return Err(usage(format!(
                        "line {}: text records need vocab_size >= 256, model has {}",
                        i + 1,
                        config.vocab_size
                    )));
                }
                text.bytes().map(u32::from).collect()
            }
            _ => return Err(usage(format!("line {}: exactly one of tokens or text is required", i + 1))),
        };
        if tokens.is_empty() {
            return Err(usage(format!("line {}: document {} is empty", i + 1, rec.doc_id)));
        }
        if tokens.len() <= config.max_seq {
            docs.push((rec.doc_id, tokens));
        } else {
            for (w, chunk) in tokens.chunks(config.max_seq).enumerate() {
                docs.push((format!("{}#w{w}", rec.doc_id), chunk.to_vec()));
            }
        }
    }
    Ok(docs)
}

fn open_or_create(root: &Path, dtype: Dtype) -> CliResult<DiskStore> {
    match DiskStore::open(root, Mode::ReadWrite) {
        Ok(s) if s.dtype() != dtype => Err(CliError::Usage(format!(
            "{} holds {} activations, not {dtype}",
            root.display(),
            s.dtype()
        ))),
        Ok(s) => Ok(s),
        Err(StoreError::NotFound(_)) => Ok(DiskStore::create(root, dtype)?),
        Err(e) => Err(e.into()),
    }
}

fn build(config_path: &Path, corpus: &Path, layer: usize, dtype: Dtype, out: &Path) -> CliResult {
    let config = load_config(config_path)?;
    if layer > config.n_layers {
        return Err(CliError::Usage(format!("--layer {layer} exceeds n_layers {}", config.n_layers)));
    }
    let docs = read_corpus(corpus, &config)?;
    let model = Model::init(config)?;
    let model_id = model.model_id();
    let mut store = open_or_create(out, dtype)?;
    let (mut written, mut skipped, mut bytes) = (0usize, 0usize, 0u64);
    for (doc_id, tokens) in &docs {
        let key = CacheKey::new(model_id.as_str(), layer, doc_id.as_str());
        if store.contains(&key) {
            skipped += 1;
            continue;
        }
        let h = model.forward_range(model.embed(tokens).map_err(|e| CliError::Usage(format!("{doc_id}: {e}")))?, 0, layer)?;
        bytes += store.put(key, &h)?.byte_len;
        written += 1;
    }
    store.sync()?;
    println!(
        "model {model_id} layer {layer}: wrote {written} entries ({bytes} bytes, {dtype}), {skipped} already cached, store {}",
        out.display()
    );
    Ok(())
}

fn verify(root: &Path) -> CliResult {
    let report = store::store_verify(root)?;
    for c in &report.corrupted {
        println!("corrupted {}: {}", c.key, c.reason);
    }
    println!("{} entries, {} ok, {} corrupted", report.entries, report.ok, report.corrupted.len());
    if report.is_clean() {
        Ok(())
    } else {
        Err(CliError::Failure(format!("{} corrupted entries in {}", report.corrupted.len(), root.display())))
    }
}

fn run_bench(scenario: Scenario, store_dir: &Path, json: &Path, csv: Option<&Path>) -> CliResult {
    let n = scenario.config.n_layers;
    if scenario.k >= n {
        return Err(CliError::Usage(format!("--k {} must be below n_layers {n}", scenario.k)));
    }
    scenario.validate()?;
    let model = Model::init(scenario.config.clone())?;
    let docs = bench::synthetic_workload(&scenario.config, scenario.batch, scenario.seq_len);
    let store: Option<Arc<dyn ActivationStore>> = if scenario.mode.is_recycle() {
        let mut disk = open_or_create(store_dir, Dtype::F32).or_else(|e| match e {
            // an existing f16 store is fine too
            CliError::Usage(_) => Ok(DiskStore::open(store_dir, Mode::ReadWrite)?),
            other => Err(other),
        })?;
        let written = bench::populate(&mut disk, &model, scenario.k, &docs)?;
        if written > 0 {
            log::info!("cached {written} benchmark documents at layer {}", scenario.k);
        }
        disk.sync()?;
        drop(disk);
        Some(Arc::new(DiskStore::open(store_dir, Mode::Read)?))
    } else {
        None
    };
    let report = bench::run_benchmark(&model, &scenario, &docs, store)?;
    bench::report_emit(&report, ReportFormat::Json, json)?;
    if let Some(csv) = csv {
        bench::report_emit(&report, ReportFormat::Csv, csv)?;
    }
    println!(
        "{} N={} k={}: baseline {:.2} ± {:.2} ms, variant {:.2} ± {:.2} ms, speedup {}% (theoretical {}%), wait {:.2} ms",
        scenario.mode,
        n,
        scenario.k,
        report.baseline.mean_ms,
        report.baseline.stdev_ms,
        report.variant.mean_ms,
        report.variant.stdev_ms,
        embrec_core::display_pct(report.measured_speedup_pct),
        embrec_core::display_pct(report.theoretical_speedup_pct),
        report.wait_time_ms,
    );
    Ok(())
}

fn inspect(root: &Path, doc: &str) -> CliResult {
    let store = DiskStore::open(root, Mode::Read)?;
    let metas: Vec<_> = store.entries().filter(|m| m.key.doc_id == doc).cloned().collect();
    if metas.is_empty() {
        return Err(StoreError::NotFound(format!("no entries for document {doc:?} in {}", root.display())).into());
    }
    for meta in metas {
        let t = store.get(&meta.key)?;
        let s = summary(&t);
        println!("{}", serde_json::to_string(&meta).expect("EntryMeta serializes"));
        println!(
            "  shape [{} x {}] min {:.6} max {:.6} mean {:.6} std {:.6} crc32(f32) {:08x}",
            t.seq_len(),
            t.dim(),
            s.min,
            s.max,
            s.mean,
            s.std,
            t.checksum()
        );
    }
    Ok(())
}

struct Summary {
    min: f32,
    max: f32,
    mean: f64,
    std: f64,
}

fn summary(t: &ActivationTensor) -> Summary {
    let data = t.data();
    let n = data.len() as f64;
    let mean = data.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = data.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
    Summary {
        min: data.iter().copied().fold(f32::INFINITY, f32::min),
        max: data.iter().copied().fold(f32::NEG_INFINITY, f32::max),
        mean,
        std: var.sqrt(),
    }
}

const DEMO_TEXTS: [&str; 3] = [
    "Layer recycling caches an intermediate activation and resumes from it.",
    "The cached rows are stored unpadded, little-endian, one entry per document.",
    "A recycled pass must match the full pass bit for bit.",
];

fn demo(seed: u64) -> CliResult {
    let config = ModelConfig {
        n_layers: 4,
        d_model: 32,
        n_heads: 4,
        d_ff: 64,
        vocab_size: 256,
        max_seq: 96,
        ln_eps: 1e-5,
        seed,
    };
    let k = config.n_layers / 2;
    let model = Model::init(config)?;
    let dir = tempfile::tempdir().map_err(|e| CliError::Failure(e.to_string()))?;
    let mut disk = DiskStore::create(dir.path().join("store"), Dtype::F32)?;
    let model_id = model.model_id();
    println!("model {model_id}, caching layer {k} of {}", model.n_layers());
    let mut mismatches = 0;
    for (i, text) in DEMO_TEXTS.iter().enumerate() {
        let tokens: Vec<u32> = text.bytes().map(u32::from).collect();
        let key = CacheKey::new(model_id.as_str(), k, format!("demo-{i}"));
        let full = model.full_forward(&tokens)?;
        disk.put(key.clone(), &model.forward_range(model.embed(&tokens)?, 0, k)?)?;
        let recycled = model.forward_range(disk.get(&key)?, k, model.n_layers())?;
        let same = full.bit_eq(&recycled);
        mismatches += usize::from(!same);
        println!(
            "{key}: full {:08x} recycled {:08x} {}",
            full.checksum(),
            recycled.checksum(),
            if same { "match" } else { "MISMATCH" }
        );
    }
    if mismatches == 0 {
        Ok(())
    } else {
        Err(CliError::Failure(format!("{mismatches} documents differ")))
    }
}
