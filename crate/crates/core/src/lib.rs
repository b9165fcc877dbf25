//! Deterministic building blocks for layer recycling.
//!
//! Everything in this crate is pure computation and runs under `no_std` with
//! `alloc`: a splitmix64 generator, binary16 conversion, CRC-32, activation
//! tensors, a small post-LN transformer encoder that can be split at any
//! layer, bottleneck adapters, the cross-model fusion MLP, and the cost-model
//! arithmetic used by the benchmark harness.
//!
//! IO, file formats and timing live in the `embrec` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod checksum;
pub mod cost;
mod error;
pub mod binary16;
pub mod model;
pub mod rng;
pub mod tensor;

pub use checksum::checksum;
pub use cost::{
    display_pct, entry_size, median, speedup_pct, theoretical_speedup_pct, StorageEstimate, TimingStats,
};
pub use error::{Error, Result};
pub use binary16::{f16_to_f32, f32_to_f16};
pub use model::{
    adapter_apply, cross_model_fuse, trainable_fraction, Adapter, AdapterStack, FusionMLP,
    LayerParams, Model, ModelConfig, TrainMode, TrainableCount,
};
pub use rng::Rng;
pub use tensor::{ActivationTensor, Dtype, Matrix};
