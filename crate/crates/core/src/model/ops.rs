//! Numeric kernels used by the encoder.
//!
//! Every kernel accumulates in a fixed order so that a given input always
//! produces the same bits, whichever code path reaches it.

use alloc::{vec, vec::Vec};

use crate::tensor::Matrix;

#[allow(clippy::excessive_precision)]
const GELU_SQRT_2_OVER_PI: f32 = 0.797_884_560_8;
const GELU_CUBIC: f32 = 0.044_715;

/// `x W + b` for `rows` row vectors stored contiguously in `x`.
pub fn linear(x: &[f32], rows: usize, w: &Matrix, b: &[f32]) -> Vec<f32> {
    let (inner, cols) = (w.rows(), w.cols());
    debug_assert_eq!(x.len(), rows * inner);
    debug_assert_eq!(b.len(), cols);
    let wd = w.data();
    let mut out = vec![0.0f32; rows * cols];
    for r in 0..rows {
        let xr = &x[r * inner..(r + 1) * inner];
        let or = &mut out[r * cols..(r + 1) * cols];
        for (k, &a) in xr.iter().enumerate() {
            let wr = &wd[k * cols..(k + 1) * cols];
            for (o, &wv) in or.iter_mut().zip(wr) {
                *o += a * wv;
            }
        }
        for (o, &bv) in or.iter_mut().zip(b) {
            *o += bv;
        }
    }
    out
}

/// Numerically stable softmax over one row.
pub fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in row.iter_mut() {
        *v = libm::expf(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Unmasked multi-head scaled dot-product attention over `[S x d]` inputs
/// already projected to `q`, `k`, `v`. Heads occupy contiguous column blocks.
pub fn attention(q: &[f32], k: &[f32], v: &[f32], seq_len: usize, dim: usize, n_heads: usize) -> Vec<f32> {
    let head_dim = dim / n_heads;
    let scale = libm::sqrtf(head_dim as f32);
    let mut ctx = vec![0.0f32; seq_len * dim];
    let mut scores = vec![0.0f32; seq_len];
    for h in 0..n_heads {
        let off = h * head_dim;
        for i in 0..seq_len {
            let qi = &q[i * dim + off..i * dim + off + head_dim];
            for (j, s) in scores.iter_mut().enumerate() {
                let kj = &k[j * dim + off..j * dim + off + head_dim];
                let mut dot = 0.0f32;
                for (a, b) in qi.iter().zip(kj) {
                    dot += a * b;
                }
                *s = dot / scale;
            }
            softmax_in_place(&mut scores);
            let ci = &mut ctx[i * dim + off..i * dim + off + head_dim];
            for (j, &p) in scores.iter().enumerate() {
                let vj = &v[j * dim + off..j * dim + off + head_dim];
                for (c, &vv) in ci.iter_mut().zip(vj) {
                    *c += p * vv;
                }
            }
        }
    }
    ctx
}

/// Row-wise LayerNorm with population variance; `eps` sits inside the root.
///
/// A row whose elements are all equal normalizes to exactly zero before the
/// affine step, so its output is `beta`.
pub fn layer_norm(x: &mut [f32], dim: usize, gamma: &[f32], beta: &[f32], eps: f32) {
    for row in x.chunks_exact_mut(dim) {
        let first = row[0];
        if row.iter().all(|&v| v == first) {
            row.copy_from_slice(beta);
            continue;
        }
        let mean = row.iter().sum::<f32>() / dim as f32;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / dim as f32;
        let inv = 1.0 / libm::sqrtf(var + eps);
        for ((v, &g), &b) in row.iter_mut().zip(gamma).zip(beta) {
            *v = (*v - mean) * inv * g + b;
        }
    }
}

/// GELU, tanh approximation.
#[inline]
pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::tanhf(GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)))
}

#[inline]
pub fn relu(x: f32) -> f32 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `h += delta` elementwise, leaving elements with a zero delta untouched so
/// that `-0.0` survives a zero update.
pub fn add_residual(h: &mut [f32], delta: &[f32]) {
    for (a, &d) in h.iter_mut().zip(delta) {
        if d != 0.0 {
            *a += d;
        }
    }
}
