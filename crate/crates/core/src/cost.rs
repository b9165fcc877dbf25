//! Speedup and storage arithmetic.
//!
//! Speedup is `(t_baseline / t_variant - 1) * 100`, so halving the work is a
//! 100% speedup. Under a uniform per-layer cost, caching layer `k` of an
//! `N`-layer encoder caps the speedup at `k / (N - k) * 100`.

use alloc::{format, string::String, vec::Vec};

use crate::error::{Error, Result};
use crate::tensor::Dtype;

/// Measured speedup of `variant_ms` over `baseline_ms`, in percent.
///
/// Evaluated as `(b - v) / v * 100`, which equals `(b / v - 1) * 100` but is
/// exact whenever `b - v` is, so timings that follow the cost model reproduce
/// [`theoretical_speedup_pct`] to the bit.
pub fn speedup_pct(baseline_ms: f64, variant_ms: f64) -> Result<f64> {
    if !(baseline_ms > 0.0 && variant_ms > 0.0) || !baseline_ms.is_finite() || !variant_ms.is_finite() {
        return Err(Error::Invalid(format!(
            "timings must be positive and finite, got {baseline_ms} and {variant_ms}"
        )));
    }
    Ok((baseline_ms - variant_ms) / variant_ms * 100.0)
}

/// Upper bound on speedup when layers `1..=k` of `n` are skipped.
pub fn theoretical_speedup_pct(k: usize, n: usize) -> Result<f64> {
    if k >= n {
        return Err(Error::Invalid(format!("k={k} leaves no layers to run out of n={n}")));
    }
    Ok(k as f64 / (n - k) as f64 * 100.0)
}

/// Rounds a percentage for display; reports keep full precision.
pub fn display_pct(pct: f64) -> i64 {
    libm::round(pct) as i64
}

/// Bytes of one cached `[seq_len x dim]` entry stored as `dtype`.
pub fn entry_size(seq_len: usize, dim: usize, dtype: Dtype) -> Result<u64> {
    if seq_len == 0 || dim == 0 {
        return Err(Error::Invalid(format!("entry shape [{seq_len} x {dim}] is empty")));
    }
    (seq_len as u64)
        .checked_mul(dim as u64)
        .and_then(|n| n.checked_mul(dtype.bytes_per_element() as u64))
        .ok_or_else(|| Error::Invalid(format!("entry [{seq_len} x {dim}] overflows u64")))
}

/// Storage for a document of `tokens` tokens, both as stored (true length)
/// and as it would be if padded to whole `window`-token sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StorageEstimate {
    pub tokens: u64,
    pub dim: u64,
    pub window: u64,
    pub unpadded_bytes: u64,
    pub padded_bytes: u64,
}

impl StorageEstimate {
    pub fn new(tokens: usize, dim: usize, dtype: Dtype, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Invalid(String::from("window must be >= 1")));
        }
        let unpadded_bytes = entry_size(tokens, dim, dtype)?;
        let windows = tokens.div_ceil(window);
        let padded_bytes = windows as u64 * entry_size(window, dim, dtype)?;
        Ok(Self {
            tokens: tokens as u64,
            dim: dim as u64,
            window: window as u64,
            unpadded_bytes,
            padded_bytes,
        })
    }
}

/// Mean and sample standard deviation of repeated timings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TimingStats {
    pub mean_ms: f64,
    pub stdev_ms: f64,
    pub reps: usize,
    pub per_rep_ms: Vec<f64>,
}

impl TimingStats {
    /// Stdev uses `n - 1`; a single sample has stdev 0.
    pub fn from_samples(per_rep_ms: Vec<f64>) -> Result<Self> {
        if per_rep_ms.is_empty() {
            return Err(Error::Invalid(String::from("at least one timing sample is required")));
        }
        if per_rep_ms.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid(String::from("timing samples must be finite and >= 0")));
        }
        let n = per_rep_ms.len() as f64;
        let mean_ms = per_rep_ms.iter().sum::<f64>() / n;
        let stdev_ms = if per_rep_ms.len() > 1 {
            let ss: f64 = per_rep_ms.iter().map(|v| (v - mean_ms) * (v - mean_ms)).sum();
            libm::sqrt(ss / (n - 1.0))
        } else {
            0.0
        };
        Ok(Self { mean_ms, stdev_ms, reps: per_rep_ms.len(), per_rep_ms })
    }

    pub fn median_ms(&self) -> f64 {
        median(&self.per_rep_ms)
    }
}

/// Median of a non-empty sample; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
