//! Cross-model reuse: a 2-layer ReLU MLP maps a source model's final-layer
//! activations into the consumer's embedding space, where they are added to
//! the consumer's input embeddings.

use alloc::{format, vec, vec::Vec};

use super::{ops, INIT_RANGE};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{random_vec, ActivationTensor, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct FusionMLP {
    pub w_a: Matrix,
    pub b_a: Vec<f32>,
    pub w_b: Matrix,
    pub b_b: Vec<f32>,
}

impl FusionMLP {
    pub fn new(d_src: usize, d_hidden: usize, d_consumer: usize, seed: u64) -> Result<Self> {
        let (lo, hi) = INIT_RANGE;
        let mut rng = Rng::new(seed);
        let mlp = Self {
            w_a: Matrix::random(d_src, d_hidden, lo, hi, &mut rng)?,
            b_a: random_vec(d_hidden, lo, hi, &mut rng)?,
            w_b: Matrix::random(d_hidden, d_consumer, lo, hi, &mut rng)?,
            b_b: random_vec(d_consumer, lo, hi, &mut rng)?,
        };
        mlp.validate()?;
        Ok(mlp)
    }

    /// Hidden width defaults to the source width.
    pub fn with_default_hidden(d_src: usize, d_consumer: usize, seed: u64) -> Result<Self> {
        Self::new(d_src, d_src, d_consumer, seed)
    }

    pub fn zeros(d_src: usize, d_hidden: usize, d_consumer: usize) -> Self {
        Self {
            w_a: Matrix::zeros(d_src, d_hidden),
            b_a: vec![0.0; d_hidden],
            w_b: Matrix::zeros(d_hidden, d_consumer),
            b_b: vec![0.0; d_consumer],
        }
    }

    pub fn d_src(&self) -> usize {
        self.w_a.rows()
    }

    pub fn d_hidden(&self) -> usize {
        self.w_a.cols()
    }

    pub fn d_consumer(&self) -> usize {
        self.w_b.cols()
    }

    pub fn param_count(&self) -> u64 {
        (self.w_a.data().len() + self.b_a.len() + self.w_b.data().len() + self.b_b.len()) as u64
    }

    fn validate(&self) -> Result<()> {
        if self.d_src() == 0 || self.d_hidden() == 0 || self.d_consumer() == 0 {
            return Err(Error::Shape(format!(
                "fusion dims must be >= 1, got {}x{}x{}",
                self.d_src(),
                self.d_hidden(),
                self.d_consumer()
            )));
        }
        if self.w_b.rows() != self.d_hidden()
            || self.b_a.len() != self.d_hidden()
            || self.b_b.len() != self.d_consumer()
        {
            return Err(Error::Shape(format!(
                "fusion parts inconsistent with {}x{}x{}",
                self.d_src(),
                self.d_hidden(),
                self.d_consumer()
            )));
        }
        Ok(())
    }
}

/// `consumer_h0 + ReLU(source W_a + b_a) W_b + b_b`.
pub fn cross_model_fuse(
    consumer_h0: &ActivationTensor,
    source_final: &ActivationTensor,
    mlp: &FusionMLP,
) -> Result<ActivationTensor> {
    mlp.validate()?;
    if consumer_h0.seq_len() != source_final.seq_len() {
        return Err(Error::Shape(format!(
            "sequence lengths differ: consumer {} vs source {}",
            consumer_h0.seq_len(),
            source_final.seq_len()
        )));
    }
    if source_final.dim() != mlp.d_src() || consumer_h0.dim() != mlp.d_consumer() {
        return Err(Error::Shape(format!(
            "mlp maps {} -> {}, tensors are {} -> {}",
            mlp.d_src(),
            mlp.d_consumer(),
            source_final.dim(),
            consumer_h0.dim()
        )));
    }
    let s = source_final.seq_len();
    let mut hidden = ops::linear(source_final.data(), s, &mlp.w_a, &mlp.b_a);
    hidden.iter_mut().for_each(|v| *v = ops::relu(*v));
    let delta = ops::linear(&hidden, s, &mlp.w_b, &mlp.b_b);
    let mut out = consumer_h0.data().to_vec();
    ops::add_residual(&mut out, &delta);
    ActivationTensor::new(s, consumer_h0.dim(), out)
}
