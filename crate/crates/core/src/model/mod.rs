//! Toy post-LN transformer encoder that can stop and resume at any layer.
//!
//! A layer computes
//!
//! ```text
//! x'  = LN(MH(h) + h)
//! out = LN(FF(x') + x')
//! ```
//!
//! with unmasked multi-head attention and `FF(x) = GELU(x W1 + b1) W2 + b2`.
//! Because [`Model::forward_range`] runs the same per-layer routine whether it
//! starts at the embeddings or at a cached `h^k`, resuming from a cache is
//! bitwise identical to the uninterrupted pass.

mod adapter;
mod config;
mod fusion;
pub mod ops;
mod params;

use alloc::{format, string::String, vec::Vec};

pub use adapter::{adapter_apply, Adapter, AdapterStack};
pub use config::ModelConfig;
pub use fusion::{cross_model_fuse, FusionMLP};
pub use params::{trainable_fraction, TrainMode, TrainableCount};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{checksum_f32, random_vec, ActivationTensor, Matrix};

/// Range of initial weights.
pub const INIT_RANGE: (f32, f32) = (-0.05, 0.05);

/// Weights of one encoder layer. Projection matrices map `[.. x in]` to
/// `[.. x out]`, so `w_q` is `d x d`, `w_1` is `d x d_ff` and `w_2` is `d_ff x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w_q: Matrix,
    pub b_q: Vec<f32>,
    pub w_k: Matrix,
    pub b_k: Vec<f32>,
    pub w_v: Matrix,
    pub b_v: Vec<f32>,
    pub w_o: Matrix,
    pub b_o: Vec<f32>,
    pub ln1_gamma: Vec<f32>,
    pub ln1_beta: Vec<f32>,
    pub w_1: Matrix,
    pub b_1: Vec<f32>,
    pub w_2: Matrix,
    pub b_2: Vec<f32>,
    pub ln2_gamma: Vec<f32>,
    pub ln2_beta: Vec<f32>,
}

impl LayerParams {
    /// All projections zero, LayerNorm scale one and shift zero.
    pub fn zeros(d_model: usize, d_ff: usize) -> Self {
        let z = |n| alloc::vec![0.0f32; n];
        Self {
            w_q: Matrix::zeros(d_model, d_model),
            b_q: z(d_model),
            w_k: Matrix::zeros(d_model, d_model),
            b_k: z(d_model),
            w_v: Matrix::zeros(d_model, d_model),
            b_v: z(d_model),
            w_o: Matrix::zeros(d_model, d_model),
            b_o: z(d_model),
            ln1_gamma: alloc::vec![1.0; d_model],
            ln1_beta: z(d_model),
            w_1: Matrix::zeros(d_model, d_ff),
            b_1: z(d_ff),
            w_2: Matrix::zeros(d_ff, d_model),
            b_2: z(d_model),
            ln2_gamma: alloc::vec![1.0; d_model],
            ln2_beta: z(d_model),
        }
    }

    fn init(d: usize, d_ff: usize, rng: &mut Rng) -> Result<Self> {
        let (lo, hi) = INIT_RANGE;
        let m = |r, c, rng: &mut Rng| Matrix::random(r, c, lo, hi, rng);
        // Field order here is the draw order; do not reorder.
        let w_q = m(d, d, rng)?;
        let b_q = random_vec(d, lo, hi, rng)?;
        let w_k = m(d, d, rng)?;
        let b_k = random_vec(d, lo, hi, rng)?;
        let w_v = m(d, d, rng)?;
        let b_v = random_vec(d, lo, hi, rng)?;
        let w_o = m(d, d, rng)?;
        let b_o = random_vec(d, lo, hi, rng)?;
        let w_1 = m(d, d_ff, rng)?;
        let b_1 = random_vec(d_ff, lo, hi, rng)?;
        let w_2 = m(d_ff, d, rng)?;
        let b_2 = random_vec(d, lo, hi, rng)?;
        Ok(Self {
            w_q,
            b_q,
            w_k,
            b_k,
            w_v,
            b_v,
            w_o,
            b_o,
            ln1_gamma: alloc::vec![1.0; d],
            ln1_beta: alloc::vec![0.0; d],
            w_1,
            b_1,
            w_2,
            b_2,
            ln2_gamma: alloc::vec![1.0; d],
            ln2_beta: alloc::vec![0.0; d],
        })
    }

    /// Named parameter slices in initialization order.
    pub fn named(&self) -> [(&'static str, &[f32]); 16] {
        [
            ("w_q", self.w_q.data()),
            ("b_q", &self.b_q),
            ("w_k", self.w_k.data()),
            ("b_k", &self.b_k),
            ("w_v", self.w_v.data()),
            ("b_v", &self.b_v),
            ("w_o", self.w_o.data()),
            ("b_o", &self.b_o),
            ("ln1_gamma", &self.ln1_gamma),
            ("ln1_beta", &self.ln1_beta),
            ("w_1", self.w_1.data()),
            ("b_1", &self.b_1),
            ("w_2", self.w_2.data()),
            ("b_2", &self.b_2),
            ("ln2_gamma", &self.ln2_gamma),
            ("ln2_beta", &self.ln2_beta),
        ]
    }

    fn check_shapes(&self, d: usize, d_ff: usize) -> Result<()> {
        let mats = [
            ("w_q", &self.w_q, d, d),
            ("w_k", &self.w_k, d, d),
            ("w_v", &self.w_v, d, d),
            ("w_o", &self.w_o, d, d),
            ("w_1", &self.w_1, d, d_ff),
            ("w_2", &self.w_2, d_ff, d),
        ];
        for (name, m, r, c) in mats {
            if (m.rows(), m.cols()) != (r, c) {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        let vecs = [
            ("b_q", self.b_q.len(), d),
            ("b_k", self.b_k.len(), d),
            ("b_v", self.b_v.len(), d),
            ("b_o", self.b_o.len(), d),
            ("ln1_gamma", self.ln1_gamma.len(), d),
            ("ln1_beta", self.ln1_beta.len(), d),
            ("b_1", self.b_1.len(), d_ff),
            ("b_2", self.b_2.len(), d),
            ("ln2_gamma", self.ln2_gamma.len(), d),
            ("ln2_beta", self.ln2_beta.len(), d),
        ];
        for (name, len, want) in vecs {
            if len != want {
                return Err(Error::Shape(format!("{name} has length {len}, expected {want}")));
            }
        }
        if self.named().iter().any(|(_, p)| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(String::from("layer parameters must be finite")));
        }
        Ok(())
    }
}

/// An immutable encoder: embeddings, `N` layers and optional adapters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    token_embedding: Matrix,
    position_embedding: Matrix,
    layers: Vec<LayerParams>,
    adapters: Option<AdapterStack>,
}

impl Model {
    /// Initializes every parameter from one splitmix64 stream seeded with
    /// `config.seed`: token embeddings, position embeddings, then each layer
    /// in [`LayerParams`] field order. LayerNorm pairs start at one/zero and
    /// consume no draws.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (lo, hi) = INIT_RANGE;
        let d = config.d_model;
        let mut rng = Rng::new(config.seed);
        let token_embedding = Matrix::random(config.vocab_size, d, lo, hi, &mut rng)?;
        let position_embedding = Matrix::random(config.max_seq, d, lo, hi, &mut rng)?;
        let layers = (0..config.n_layers)
            .map(|_| LayerParams::init(d, config.d_ff, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, token_embedding, position_embedding, layers, adapters: None })
    }

    /// Assembles a model from explicit weights, checking every shape.
    pub fn from_parts(
        config: ModelConfig,
        token_embedding: Matrix,
        position_embedding: Matrix,
        layers: Vec<LayerParams>,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        if (token_embedding.rows(), token_embedding.cols()) != (config.vocab_size, d) {
            return Err(Error::Shape(String::from("token_embedding must be vocab_size x d_model")));
        }
        if (position_embedding.rows(), position_embedding.cols()) != (config.max_seq, d) {
            return Err(Error::Shape(String::from("position_embedding must be max_seq x d_model")));
        }
        if layers.len() != config.n_layers {
            return Err(Error::Shape(format!(
                "{} layers given, config says {}",
                layers.len(),
                config.n_layers
            )));
        }
        for l in &layers {
            l.check_shapes(d, config.d_ff)?;
        }
        Ok(Self { config, token_embedding, position_embedding, layers, adapters: None })
    }

    /// Attaches an adapter stack, replacing any previous one.
    pub fn with_adapters(mut self, stack: AdapterStack) -> Result<Self> {
        if stack.dim() != self.config.d_model {
            return Err(Error::Shape(format!(
                "adapter dim {} != d_model {}",
                stack.dim(),
                self.config.d_model
            )));
        }
        if stack.last_layer() > self.config.n_layers {
            return Err(Error::Range(format!(
                "adapters reach layer {} but the model has {}",
                stack.last_layer(),
                self.config.n_layers
            )));
        }
        self.adapters = Some(stack);
        Ok(self)
    }

    pub fn without_adapters(mut self) -> Self {
        self.adapters = None;
        self
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn n_layers(&self) -> usize {
        self.config.n_layers
    }

    pub fn adapters(&self) -> Option<&AdapterStack> {
        self.adapters.as_ref()
    }

    pub fn layer(&self, l: usize) -> Option<&LayerParams> {
        l.checked_sub(1).and_then(|i| self.layers.get(i))
    }

    pub fn token_embedding(&self) -> &Matrix {
        &self.token_embedding
    }

    pub fn position_embedding(&self) -> &Matrix {
        &self.position_embedding
    }

    /// Every parameter slice, named, in initialization order; adapter
    /// parameters follow the encoder when attached.
    pub fn parameters(&self) -> Vec<(String, &[f32])> {
        let mut out = Vec::new();
        out.push((String::from("token_embedding"), self.token_embedding.data()));
        out.push((String::from("position_embedding"), self.position_embedding.data()));
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, p) in layer.named() {
                out.push((format!("layer{}.{name}", i + 1), p));
            }
        }
        if let Some(stack) = &self.adapters {
            out.extend(stack.parameters());
        }
        out
    }

    /// CRC-32 over all parameters in [`Model::parameters`] order.
    pub fn param_checksum(&self) -> u32 {
        checksum_f32(self.parameters().into_iter().map(|(_, p)| p))
    }

    /// Stable identifier for cache keys, derived from the parameters.
    pub fn model_id(&self) -> String {
        format!("toy-{:08x}", self.param_checksum())
    }

    /// `h^0[s] = token_embedding[tokens[s]] + position_embedding[s]`.
    pub fn embed(&self, tokens: &[u32]) -> Result<ActivationTensor> {
        if tokens.is_empty() {
            return Err(Error::Input(String::from("token sequence is empty")));
        }
        if tokens.len() > self.config.max_seq {
            return Err(Error::Input(format!(
                "sequence of {} tokens exceeds max_seq {}",
                tokens.len(),
                self.config.max_seq
            )));
        }
        let d = self.config.d_model;
        let mut data = Vec::with_capacity(tokens.len() * d);
        for (s, &id) in tokens.iter().enumerate() {
            let id = id as usize;
            if id >= self.config.vocab_size {
                return Err(Error::Input(format!(
                    "token id {id} at position {s} is outside vocab_size {}",
                    self.config.vocab_size
                )));
            }
            let tok = &self.token_embedding.data()[id * d..(id + 1) * d];
            let pos = &self.position_embedding.data()[s * d..(s + 1) * d];
            data.extend(tok.iter().zip(pos).map(|(a, b)| a + b));
        }
        ActivationTensor::new(tokens.len(), d, data)
    }

    /// Applies layer `l` (1-based) to `h`.
    pub fn layer_forward(&self, l: usize, h: &ActivationTensor) -> Result<ActivationTensor> {
        let layer = self.layer(l).ok_or_else(|| {
            Error::Range(format!("layer {l} outside 1..={}", self.config.n_layers))
        })?;
        let d = self.config.d_model;
        if h.dim() != d {
            return Err(Error::Shape(format!("input dim {} != d_model {d}", h.dim())));
        }
        let adapters = self.adapters.as_ref().and_then(|a| a.for_layer(l));
        let s = h.seq_len();
        let x = h.data();

        let q = ops::linear(x, s, &layer.w_q, &layer.b_q);
        let k = ops::linear(x, s, &layer.w_k, &layer.b_k);
        let v = ops::linear(x, s, &layer.w_v, &layer.b_v);
        let ctx = ops::attention(&q, &k, &v, s, d, self.config.n_heads);
        let mut mh = ops::linear(&ctx, s, &layer.w_o, &layer.b_o);
        if let Some((post_mh, _)) = adapters {
            mh = post_mh.apply_rows(&mh, s);
        }
        let mut x1 = x.to_vec();
        ops::add_residual(&mut x1, &mh);
        ops::layer_norm(&mut x1, d, &layer.ln1_gamma, &layer.ln1_beta, self.config.ln_eps);

        let mut inner = ops::linear(&x1, s, &layer.w_1, &layer.b_1);
        inner.iter_mut().for_each(|v| *v = ops::gelu(*v));
        let mut ff = ops::linear(&inner, s, &layer.w_2, &layer.b_2);
        if let Some((_, post_ff)) = adapters {
            ff = post_ff.apply_rows(&ff, s);
        }
        let mut out = x1;
        ops::add_residual(&mut out, &ff);
        ops::layer_norm(&mut out, d, &layer.ln2_gamma, &layer.ln2_beta, self.config.ln_eps);
        ActivationTensor::new(s, d, out)
    }

    /// Runs layers `from + 1 ..= to` on `h`, which must be `h^from`.
    /// `from == to` returns `h` untouched.
    pub fn forward_range(&self, h: ActivationTensor, from: usize, to: usize) -> Result<ActivationTensor> {
        if from > to || to > self.config.n_layers {
            return Err(Error::Range(format!(
                "layer range {from}..{to} invalid for a {}-layer model",
                self.config.n_layers
            )));
        }
        if h.dim() != self.config.d_model {
            return Err(Error::Shape(format!(
                "input dim {} != d_model {}",
                h.dim(),
                self.config.d_model
            )));
        }
        (from + 1..=to).try_fold(h, |acc, l| self.layer_forward(l, &acc))
    }

    pub fn full_forward(&self, tokens: &[u32]) -> Result<ActivationTensor> {
        self.forward_range(self.embed(tokens)?, 0, self.config.n_layers)
    }

    /// Consumer-side pass of cross-model reuse: the source model's final
    /// activations go through `mlp` and are added to this model's embeddings.
    pub fn full_forward_fused(
        &self,
        tokens: &[u32],
        source_final: &ActivationTensor,
        mlp: &FusionMLP,
    ) -> Result<ActivationTensor> {
        let h0 = cross_model_fuse(&self.embed(tokens)?, source_final, mlp)?;
        self.forward_range(h0, 0, self.config.n_layers)
    }
}
