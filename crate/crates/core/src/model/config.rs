use alloc::format;

use crate::error::{Error, Result};

/// Shape and seed of the toy encoder. Serialized with exactly these field
/// names when the `serde` feature is on.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub ln_eps: f32,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg| Err(Error::Config(msg));
        if self.n_layers < 1 {
            return fail(format!("n_layers must be >= 1, got {}", self.n_layers));
        }
        if self.d_model < 2 {
            return fail(format!("d_model must be >= 2, got {}", self.d_model));
        }
        if self.n_heads < 1 || self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.d_ff < 1 {
            return fail(format!("d_ff must be >= 1, got {}", self.d_ff));
        }
        if self.vocab_size < 2 {
            return fail(format!("vocab_size must be >= 2, got {}", self.vocab_size));
        }
        if self.max_seq < 1 {
            return fail(format!("max_seq must be >= 1, got {}", self.max_seq));
        }
        if !(self.ln_eps > 0.0 && self.ln_eps.is_finite()) {
            return fail(format!("ln_eps must be a positive finite number, got {}", self.ln_eps));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Elements in one encoder layer: Q/K/V/O projections with biases, two
    /// feed-forward matrices with biases, two LayerNorm scale/shift pairs.
    pub fn layer_param_count(&self) -> u64 {
        let d = self.d_model as u64;
        let ff = self.d_ff as u64;
        4 * (d * d + d) + (d * ff + ff) + (ff * d + d) + 2 * (2 * d)
    }

    pub fn embedding_param_count(&self) -> u64 {
        (self.vocab_size as u64 + self.max_seq as u64) * self.d_model as u64
    }

    /// Every element of the base model, embeddings included.
    pub fn param_count(&self) -> u64 {
        self.embedding_param_count() + self.n_layers as u64 * self.layer_param_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            vocab_size: 32,
            max_seq: 16,
            ln_eps: 1e-5,
            seed: 7,
        }
    }

    #[test]
    fn validation() {
        assert!(small().validate().is_ok());
        let bad = [
            ModelConfig { d_model: 7, ..small() },
            ModelConfig { n_layers: 0, ..small() },
            ModelConfig { n_heads: 0, ..small() },
            ModelConfig { d_model: 1, n_heads: 1, ..small() },
            ModelConfig { vocab_size: 1, ..small() },
            ModelConfig { max_seq: 0, ..small() },
            ModelConfig { d_ff: 0, ..small() },
            ModelConfig { ln_eps: 0.0, ..small() },
            ModelConfig { ln_eps: f32::NAN, ..small() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn closed_form_counts() {
        let cfg = small();
        assert_eq!(cfg.layer_param_count(), 600);
        assert_eq!(cfg.param_count(), 1584);
    }
}
