//! Activation cache, prefetcher, benchmark harness and CLI for layer
//! recycling on top of [`embrec_core`].
//!
//! A store holds `h^k` tensors keyed by `(model_id, layer, doc_id)` in
//! append-only shard files with a JSON-lines manifest. The benchmark harness
//! times the full encoder against "load `h^k`, run layers `k+1..N`" and
//! refuses to report a variant whose outputs differ from the baseline.

pub mod bench;
pub mod cli;
pub mod store;

pub use embrec_core;
