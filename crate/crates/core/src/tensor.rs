//! Row-major `f32` matrices: activations and weights.

use alloc::{format, string::String, vec, vec::Vec};
use core::{fmt, str::FromStr};

use crate::binary16::{f16_is_non_finite, f16_to_f32, f32_to_f16};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Element type of a cache payload at rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
#[repr(u8)]
pub enum Dtype {
    F32 = 0,
    F16 = 1,
}

impl Dtype {
    pub const fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F16),
            c => Err(Error::Invalid(format!("unknown dtype code {c}"))),
        }
    }

    pub const fn bytes_per_element(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F16 => 2,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F16 => "f16",
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "F32" => Ok(Dtype::F32),
            "f16" | "F16" => Ok(Dtype::F16),
            other => Err(Error::Invalid(format!("unknown dtype {other:?}"))),
        }
    }
}

/// An `[S x d]` block of layer activations.
///
/// Construction rejects wrong lengths, empty shapes and non-finite values, so
/// every tensor in circulation satisfies those invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor {
    seq_len: usize,
    dim: usize,
    data: Vec<f32>,
}

impl ActivationTensor {
    pub fn new(seq_len: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if seq_len == 0 || dim == 0 {
            return Err(Error::Shape(format!("empty tensor shape [{seq_len} x {dim}]")));
        }
        let expected = seq_len
            .checked_mul(dim)
            .ok_or_else(|| Error::Shape(String::from("shape overflows usize")))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "data length {} != {seq_len} x {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("element {i} is {}", data[i])));
        }
        Ok(Self { seq_len, dim, data })
    }

    pub fn from_fn(seq_len: usize, dim: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(seq_len.saturating_mul(dim));
        for s in 0..seq_len {
            for j in 0..dim {
                data.push(f(s, j));
            }
        }
        Self::new(seq_len, dim, data)
    }

    /// Uniform random tensor in `[lo, hi)`.
    pub fn random(seq_len: usize, dim: usize, lo: f32, hi: f32, rng: &mut Rng) -> Result<Self> {
        let mut data = Vec::with_capacity(seq_len.saturating_mul(dim));
        for _ in 0..seq_len.saturating_mul(dim) {
            data.push(rng.uniform(lo, hi)?);
        }
        Self::new(seq_len, dim, data)
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.seq_len, self.dim)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, s: usize) -> &[f32] {
        &self.data[s * self.dim..(s + 1) * self.dim]
    }

    /// Checks for `[S x d]` and returns a shape error otherwise.
    pub fn expect_shape(&self, seq_len: usize, dim: usize) -> Result<()> {
        if self.shape() == (seq_len, dim) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "expected [{seq_len} x {dim}], got [{} x {}]",
                self.seq_len, self.dim
            )))
        }
    }

    /// Little-endian row-major payload in `dtype`.
    ///
    /// Fails for `F16` when a value would overflow to infinity.
    pub fn encode(&self, dtype: Dtype) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.data.len() * dtype.bytes_per_element());
        match dtype {
            Dtype::F32 => {
                for v in &self.data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Dtype::F16 => {
                for (i, v) in self.data.iter().enumerate() {
                    let bits = f32_to_f16(*v);
                    if f16_is_non_finite(bits) {
                        return Err(Error::NonFinite(format!(
                            "element {i} = {v} overflows binary16"
                        )));
                    }
                    out.extend_from_slice(&bits.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn decode(seq_len: usize, dim: usize, dtype: Dtype, bytes: &[u8]) -> Result<Self> {
        let n = seq_len
            .checked_mul(dim)
            .ok_or_else(|| Error::Shape(String::from("shape overflows usize")))?;
        if bytes.len() != n * dtype.bytes_per_element() {
            return Err(Error::Shape(format!(
                "payload of {} bytes does not hold [{seq_len} x {dim}] {dtype}",
                bytes.len()
            )));
        }
        let data = match dtype {
            Dtype::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
            Dtype::F16 => bytes
                .chunks_exact(2)
                .map(|c| f16_to_f32(u16::from_le_bytes([c[0], c[1]])))
                .collect(),
        };
        Self::new(seq_len, dim, data)
    }

    /// Rounds every element through binary16 and back.
    pub fn quantize(&self, dtype: Dtype) -> Result<Self> {
        match dtype {
            Dtype::F32 => Ok(self.clone()),
            Dtype::F16 => Self::decode(self.seq_len, self.dim, dtype, &self.encode(dtype)?),
        }
    }

    /// CRC-32 of the `f32` little-endian payload.
    pub fn checksum(&self) -> u32 {
        let mut crc = crate::checksum::Crc32::new();
        for v in &self.data {
            crc.update(&v.to_le_bytes());
        }
        crc.finish()
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// A dense `rows x cols` weight matrix, row-major. `x W` maps a row vector of
/// length `rows` to one of length `cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data length {} != {rows} x {cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn random(rows: usize, cols: usize, lo: f32, hi: f32, rng: &mut Rng) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(rng.uniform(lo, hi)?);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access to the elements; the shape stays fixed.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }
}

/// Draws `n` uniform values, used for bias vectors.
pub(crate) fn random_vec(n: usize, lo: f32, hi: f32, rng: &mut Rng) -> Result<Vec<f32>> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}

/// CRC-32 over a sequence of `f32` slices, concatenated little-endian.
pub fn checksum_f32<'a>(parts: impl IntoIterator<Item = &'a [f32]>) -> u32 {
    let mut crc = crate::checksum::Crc32::new();
    for part in parts {
        for v in part {
            crc.update(&v.to_le_bytes());
        }
    }
    crc.finish()
}
