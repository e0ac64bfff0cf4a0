use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rnd::RndConfig;
use crate::variant::ModelVariant;

/// Weights of the five loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub action: f64,
    /// Next-state prediction weight.
    pub state: f64,
    /// Expectile return regression weight.
    pub expectile: f64,
    /// Return-bin classification weight.
    pub ret: f64,
    pub intrinsic: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { action: 1.0, state: 0.1, expectile: 1.0, ret: 0.001, intrinsic: 1.0 }
    }
}

impl LossWeights {
    /// Every term zero except the one picked by `f`.
    pub fn only(f: impl FnOnce(&mut LossWeights)) -> Self {
        let mut w = LossWeights { action: 0.0, state: 0.0, expectile: 0.0, ret: 0.0, intrinsic: 0.0 };
        f(&mut w);
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEdtConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub embed_dim: usize,
    pub num_attention_blocks: usize,
    pub num_heads: usize,
    pub context_length: usize,
    pub return_bins: usize,
    pub variant: ModelVariant,
    pub loss_weights: LossWeights,
    pub expectile_level: f64,
    /// Absent for the baseline variant.
    pub rnd: Option<RndConfig>,
    /// Returns-to-go are divided by this before entering the model.
    pub return_scale: f64,
    /// Std of the Gaussian used for non-RND weights.
    pub init_std: f64,
    pub seed: u64,
    /// Initial return-to-go token for rollouts.
    pub eval_target_return: f64,
    /// History lengths tried at every rollout step.
    pub history_candidates: Vec<usize>,
}

impl ToyEdtConfig {
    pub fn new(state_dim: usize, action_dim: usize, variant: ModelVariant) -> Self {
        let embed_dim = 32;
        let rnd = match variant {
            ModelVariant::Baseline => None,
            _ => Some(RndConfig::new(embed_dim)),
        };
        ToyEdtConfig {
            state_dim,
            action_dim,
            embed_dim,
            num_attention_blocks: 2,
            num_heads: 2,
            context_length: 20,
            return_bins: 21,
            variant,
            loss_weights: LossWeights::default(),
            expectile_level: 0.99,
            rnd,
            return_scale: 1.0,
            init_std: 0.02,
            seed: 0,
            eval_target_return: 0.0,
            history_candidates: vec![1, 5, 10, 20],
        }
    }

    /// Sets the embedding width, keeping the RND input width in sync.
    pub fn with_embed_dim(mut self, embed_dim: usize) -> Self {
        self.embed_dim = embed_dim;
        if let Some(r) = self.rnd.as_mut() {
            r.input_dim = embed_dim;
        }
        self
    }

    pub fn with_rnd_shape(mut self, depth: usize, width: usize) -> Self {
        if let Some(r) = self.rnd.as_mut() {
            r.predictor_depth = depth;
            r.hidden_width = width;
        }
        self
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.state_dim == 0 || self.action_dim == 0 {
            return bad("state_dim and action_dim must be positive".into());
        }
        if self.context_length == 0 {
            return bad("context_length must be at least 1".into());
        }
        if self.embed_dim == 0 || self.num_heads == 0 || !self.embed_dim.is_multiple_of(self.num_heads) {
            return bad(format!(
                "embed_dim {} must be a positive multiple of num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.return_bins == 0 {
            return bad("return_bins must be positive".into());
        }
        if !(self.expectile_level > 0.0 && self.expectile_level < 1.0) {
            return Err(Error::InvalidExpectileLevel(self.expectile_level));
        }
        if !(self.return_scale > 0.0 && self.return_scale.is_finite()) {
            return bad("return_scale must be positive".into());
        }
        match (self.variant, &self.rnd) {
            (ModelVariant::Baseline, Some(_)) => return bad("baseline variant must not carry an RND config".into()),
            (ModelVariant::Sil | ModelVariant::Til, None) => {
                return bad(format!("{} variant requires an RND config", self.variant))
            }
            (_, Some(r)) => {
                r.validate()?;
                if r.input_dim != self.embed_dim {
                    return bad(format!("RND input_dim {} != embed_dim {}", r.input_dim, self.embed_dim));
                }
            }
            _ => {}
        }
        if self.history_candidates.iter().any(|&k| k == 0 || k > self.context_length) {
            return bad(format!(
                "history candidates {:?} must lie in 1..={}",
                self.history_candidates, self.context_length
            ));
        }
        Ok(())
    }
}
