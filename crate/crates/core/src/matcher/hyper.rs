use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::pooled_len;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Context utterances kept (the most recent ones).
    pub max_utterances: usize,
    /// Tokens kept per utterance or response (the last ones).
    pub max_tokens: usize,
    /// Width `q` of each per-utterance matching vector.
    pub match_dim: usize,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub min_token_freq: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub self_match_enabled: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            embed_dim: 100,
            hidden_dim: 100,
            max_utterances: 10,
            max_tokens: 50,
            match_dim: 50,
            conv_filters: 8,
            conv_kernel: 3,
            pool_window: 3,
            pool_stride: 3,
            min_token_freq: 2,
            batch_size: 32,
            learning_rate: 1e-3,
            epochs: 10,
            patience: 3,
            clip_norm: 5.0,
            seed: 42,
            self_match_enabled: true,
        }
    }
}

impl HyperParams {
    /// Laptop-scale setting for the synthetic corpus: small dimensions,
    /// short utterances, a few epochs.
    pub fn desk() -> Self {
        HyperParams {
            embed_dim: 32,
            hidden_dim: 32,
            max_utterances: 8,
            max_tokens: 12,
            match_dim: 16,
            learning_rate: 2e-3,
            epochs: 4,
            patience: 2,
            ..HyperParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("max_utterances", self.max_utterances),
            ("max_tokens", self.max_tokens),
            ("match_dim", self.match_dim),
            ("conv_filters", self.conv_filters),
            ("conv_kernel", self.conv_kernel),
            ("pool_window", self.pool_window),
            ("pool_stride", self.pool_stride),
            ("min_token_freq", self.min_token_freq),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("patience", self.patience),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("hyper-parameter {name} must be positive")));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    /// Side of the square similarity image; short inputs are zero-padded up
    /// to the convolution window.
    pub fn image_side(&self) -> usize {
        self.max_tokens.max(self.conv_kernel)
    }

    pub fn pooled_side(&self) -> usize {
        pooled_len(self.image_side() - self.conv_kernel + 1, self.pool_window, self.pool_stride)
    }

    /// Flattened feature width entering the dense projection.
    pub fn pooled_features(&self) -> usize {
        self.conv_filters * self.pooled_side() * self.pooled_side()
    }
}
