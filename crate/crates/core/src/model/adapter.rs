//! Bottleneck adapters: `h + ReLU(h W_down + b_down) W_up + b_up`.
//!
//! Each adapted layer carries two of them, one on the attention output and
//! one on the feed-forward output, both applied before the residual add and
//! LayerNorm.

use alloc::{format, string::String, vec, vec::Vec};

use super::{ops, INIT_RANGE};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{random_vec, ActivationTensor, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Adapter {
    pub w_down: Matrix,
    pub b_down: Vec<f32>,
    pub w_up: Matrix,
    pub b_up: Vec<f32>,
}

impl Adapter {
    /// Element count of one adapter: `d*b + b + b*d + d`.
    pub const fn param_count(dim: usize, bottleneck: usize) -> u64 {
        let (d, b) = (dim as u64, bottleneck as u64);
        d * b + b + b * d + d
    }

    /// Random down-projection, zero up-projection: the identity map until
    /// trained.
    pub fn identity_init(dim: usize, bottleneck: usize, rng: &mut Rng) -> Result<Self> {
        let (lo, hi) = INIT_RANGE;
        Ok(Self {
            w_down: Matrix::random(dim, bottleneck, lo, hi, rng)?,
            b_down: random_vec(bottleneck, lo, hi, rng)?,
            w_up: Matrix::zeros(bottleneck, dim),
            b_up: vec![0.0; dim],
        })
    }

    pub fn random(dim: usize, bottleneck: usize, rng: &mut Rng) -> Result<Self> {
        let (lo, hi) = INIT_RANGE;
        Ok(Self {
            w_down: Matrix::random(dim, bottleneck, lo, hi, rng)?,
            b_down: random_vec(bottleneck, lo, hi, rng)?,
            w_up: Matrix::random(bottleneck, dim, lo, hi, rng)?,
            b_up: random_vec(dim, lo, hi, rng)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.w_down.rows()
    }

    pub fn bottleneck(&self) -> usize {
        self.w_down.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, b) = (self.dim(), self.bottleneck());
        if d == 0 || b == 0 {
            return Err(Error::Shape(String::from("adapter dims must be >= 1")));
        }
        if (self.w_up.rows(), self.w_up.cols()) != (b, d)
            || self.b_down.len() != b
            || self.b_up.len() != d
        {
            return Err(Error::Shape(format!("adapter parts inconsistent with {d}x{b}")));
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, &[f32]); 4] {
        [
            ("w_down", self.w_down.data()),
            ("b_down", &self.b_down),
            ("w_up", self.w_up.data()),
            ("b_up", &self.b_up),
        ]
    }

    pub(crate) fn apply_rows(&self, h: &[f32], rows: usize) -> Vec<f32> {
        let mut hidden = ops::linear(h, rows, &self.w_down, &self.b_down);
        hidden.iter_mut().for_each(|v| *v = ops::relu(*v));
        let delta = ops::linear(&hidden, rows, &self.w_up, &self.b_up);
        let mut out = h.to_vec();
        ops::add_residual(&mut out, &delta);
        out
    }
}

/// Applies one adapter to a whole activation tensor.
pub fn adapter_apply(h: &ActivationTensor, adapter: &Adapter) -> Result<ActivationTensor> {
    adapter.validate()?;
    if h.dim() != adapter.dim() {
        return Err(Error::Shape(format!(
            "tensor dim {} != adapter dim {}",
            h.dim(),
            adapter.dim()
        )));
    }
    ActivationTensor::new(h.seq_len(), h.dim(), adapter.apply_rows(h.data(), h.seq_len()))
}

/// Adapter pairs on the contiguous layer range `first_layer..=last_layer`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterStack {
    dim: usize,
    bottleneck: usize,
    first_layer: usize,
    pairs: Vec<(Adapter, Adapter)>,
}

impl AdapterStack {
    /// Builds a stack from explicit `(post-attention, post-feed-forward)`
    /// pairs, the first one attached to `first_layer` (1-based).
    pub fn from_parts(first_layer: usize, pairs: Vec<(Adapter, Adapter)>) -> Result<Self> {
        if first_layer == 0 {
            return Err(Error::Range(String::from("adapters start at layer 1 or later")));
        }
        let (dim, bottleneck) = match pairs.first() {
            Some((a, _)) => (a.dim(), a.bottleneck()),
            None => return Err(Error::Shape(String::from("adapter stack is empty"))),
        };
        for (a, b) in &pairs {
            for ad in [a, b] {
                ad.validate()?;
                if (ad.dim(), ad.bottleneck()) != (dim, bottleneck) {
                    return Err(Error::Shape(String::from("adapters in a stack must share dims")));
                }
            }
        }
        Ok(Self { dim, bottleneck, first_layer, pairs })
    }

    /// Identity-initialized adapters on layers `cached_layer + 1 ..= n_layers`,
    /// drawn from a stream seeded with `seed`.
    pub fn for_reduced_model(
        dim: usize,
        bottleneck: usize,
        cached_layer: usize,
        n_layers: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::build(dim, bottleneck, cached_layer, n_layers, seed, Adapter::identity_init)
    }

    /// Like [`AdapterStack::for_reduced_model`] with random up-projections too.
    pub fn random(
        dim: usize,
        bottleneck: usize,
        cached_layer: usize,
        n_layers: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::build(dim, bottleneck, cached_layer, n_layers, seed, Adapter::random)
    }

    fn build(
        dim: usize,
        bottleneck: usize,
        cached_layer: usize,
        n_layers: usize,
        seed: u64,
        make: fn(usize, usize, &mut Rng) -> Result<Adapter>,
    ) -> Result<Self> {
        if cached_layer >= n_layers {
            return Err(Error::Range(format!(
                "no layers above {cached_layer} in a {n_layers}-layer model"
            )));
        }
        if dim == 0 || bottleneck == 0 {
            return Err(Error::Shape(String::from("adapter dims must be >= 1")));
        }
        let mut rng = Rng::new(seed);
        let pairs = (cached_layer + 1..=n_layers)
            .map(|_| Ok((make(dim, bottleneck, &mut rng)?, make(dim, bottleneck, &mut rng)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(cached_layer + 1, pairs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bottleneck(&self) -> usize {
        self.bottleneck
    }

    pub fn first_layer(&self) -> usize {
        self.first_layer
    }

    pub fn last_layer(&self) -> usize {
        self.first_layer + self.pairs.len() - 1
    }

    pub fn for_layer(&self, l: usize) -> Option<&(Adapter, Adapter)> {
        l.checked_sub(self.first_layer).and_then(|i| self.pairs.get(i))
    }

    pub fn param_count(&self) -> u64 {
        2 * self.pairs.len() as u64 * Adapter::param_count(self.dim, self.bottleneck)
    }

    /// Named slices, layer by layer, post-attention adapter first.
    pub fn parameters(&self) -> Vec<(String, &[f32])> {
        let mut out = Vec::new();
        for (i, (mh, ff)) in self.pairs.iter().enumerate() {
            let l = self.first_layer + i;
            for (site, ad) in [("mh", mh), ("ff", ff)] {
                for (name, p) in ad.named() {
                    out.push((format!("layer{l}.adapter_{site}.{name}"), p));
                }
            }
        }
        out
    }
}
