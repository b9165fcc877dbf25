//! Reference implementations used only as test oracles. They are written in
//! `f64` straight from the layer equations and share no code with the crate.

#![allow(dead_code)]

use embrec_core::{ActivationTensor, LayerParams, Model};

pub fn to_f64(xs: &[f32]) -> Vec<f64> {
    xs.iter().map(|&v| f64::from(v)).collect()
}

/// `x` is rows x inner, `w` is inner x cols (row-major).
fn affine(x: &[f64], rows: usize, w: &[f32], b: &[f32]) -> Vec<f64> {
    let cols = b.len();
    let inner = w.len() / cols;
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = f64::from(b[c]);
            for i in 0..inner {
                acc += x[r * inner + i] * f64::from(w[i * cols + c]);
            }
            out[r * cols + c] = acc;
        }
    }
    out
}

fn norm(x: &[f64], d: usize, g: &[f32], b: &[f32], eps: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        for j in 0..d {
            out.push((row[j] - mean) / (var + eps).sqrt() * f64::from(g[j]) + f64::from(b[j]));
        }
    }
    out
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (0.7978845608 * (x + 0.044715 * x.powi(3))).tanh())
}

pub fn oracle_layer(p: &LayerParams, h: &[f64], s: usize, d: usize, heads: usize, eps: f64) -> Vec<f64> {
    let q = affine(h, s, p.w_q.data(), &p.b_q);
    let k = affine(h, s, p.w_k.data(), &p.b_k);
    let v = affine(h, s, p.w_v.data(), &p.b_v);
    let dh = d / heads;
    let mut ctx = vec![0.0; s * d];
    for hd in 0..heads {
        for i in 0..s {
            let logits: Vec<f64> = (0..s)
                .map(|j| {
                    (0..dh).map(|t| q[i * d + hd * dh + t] * k[j * d + hd * dh + t]).sum::<f64>()
                        / (dh as f64).sqrt()
                })
                .collect();
            let m = logits.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            for t in 0..dh {
                ctx[i * d + hd * dh + t] =
                    (0..s).map(|j| (logits[j] - m).exp() / z * v[j * d + hd * dh + t]).sum();
            }
        }
    }
    let mh = affine(&ctx, s, p.w_o.data(), &p.b_o);
    let pre1: Vec<f64> = mh.iter().zip(h).map(|(a, b)| a + b).collect();
    let x1 = norm(&pre1, d, &p.ln1_gamma, &p.ln1_beta, eps);
    let inner: Vec<f64> = affine(&x1, s, p.w_1.data(), &p.b_1).into_iter().map(gelu).collect();
    let ff = affine(&inner, s, p.w_2.data(), &p.b_2);
    let pre2: Vec<f64> = ff.iter().zip(&x1).map(|(a, b)| a + b).collect();
    norm(&pre2, d, &p.ln2_gamma, &p.ln2_beta, eps)
}

/// Full encoder pass in `f64` (adapters not supported).
pub fn oracle_forward(model: &Model, tokens: &[u32]) -> Vec<f64> {
    let c = model.config();
    let d = c.d_model;
    let mut h = Vec::with_capacity(tokens.len() * d);
    for (s, &t) in tokens.iter().enumerate() {
        for j in 0..d {
            h.push(
                f64::from(model.token_embedding().get(t as usize, j))
                    + f64::from(model.position_embedding().get(s, j)),
            );
        }
    }
    for l in 1..=c.n_layers {
        h = oracle_layer(model.layer(l).unwrap(), &h, tokens.len(), d, c.n_heads, f64::from(c.ln_eps));
    }
    h
}

pub fn max_abs_diff(a: &ActivationTensor, b: &[f64]) -> f64 {
    a.data().iter().zip(b).map(|(x, y)| (f64::from(*x) - y).abs()).fold(0.0, f64::max)
}

/// Nearest binary16 to `x` by exhaustive search over every finite pattern,
/// ties to the even pattern. Decoding is done from the format definition.
pub fn f16_oracle(x: f32) -> u16 {
    fn decode(bits: u16) -> f64 {
        let e = ((bits >> 10) & 0x1F) as i32;
        let m = f64::from(bits & 0x3FF);
        if e == 0 {
            m / 1024.0 * 2f64.powi(-14)
        } else {
            (1.0 + m / 1024.0) * 2f64.powi(e - 15)
        }
    }
    let sign: u16 = if x.is_sign_negative() { 0x8000 } else { 0 };
    let mag = f64::from(x.abs());
    // halfway between 65504 and 2^16 rounds up to infinity
    if mag >= 65520.0 {
        return sign | 0x7C00;
    }
    let mut best = 0u16;
    let mut best_err = f64::INFINITY;
    for bits in 0u16..0x7C00 {
        let err = (decode(bits) - mag).abs();
        if err < best_err || (err == best_err && bits % 2 == 0 && best % 2 == 1) {
            best = bits;
            best_err = err;
        }
    }
    sign | best
}
