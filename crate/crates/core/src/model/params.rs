use alloc::format;

use super::{Adapter, Model};
use crate::error::{Error, Result};

/// Which parameters are trained on top of a cache at layer `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Every weight of layers `k+1..=N`.
    Reduced,
    /// Only adapter weights on layers `k+1..=N`.
    Adapters,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainableCount {
    pub trainable: u64,
    pub total: u64,
    pub fraction: f64,
}

/// Counts trainable parameters for a model recycled at layer `k`.
///
/// `total` covers the whole model: embeddings, all `N` layers, and attached
/// adapters.
pub fn trainable_fraction(model: &Model, k: usize, mode: TrainMode) -> Result<TrainableCount> {
    let cfg = model.config();
    if k > cfg.n_layers {
        return Err(Error::Range(format!("k={k} exceeds n_layers={}", cfg.n_layers)));
    }
    let adapters = model.adapters();
    let total = cfg.param_count() + adapters.map_or(0, |a| a.param_count());
    let trainable = match mode {
        TrainMode::Reduced => (cfg.n_layers - k) as u64 * cfg.layer_param_count(),
        TrainMode::Adapters => adapters.map_or(0, |a| {
            let lo = a.first_layer().max(k + 1);
            let hi = a.last_layer();
            let layers = if hi >= lo { (hi - lo + 1) as u64 } else { 0 };
            layers * 2 * Adapter::param_count(a.dim(), a.bottleneck())
        }),
    };
    Ok(TrainableCount { trainable, total, fraction: trainable as f64 / total as f64 })
}
