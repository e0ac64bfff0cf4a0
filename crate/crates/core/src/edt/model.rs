//! Miniature decision-transformer with return/state/action token streams.
//!
//! Each time step contributes three tokens in the order return-to-go,
//! state, action. A learned positional row (indexed by the step's offset
//! inside the window) is added to all three. Heads read the transformer
//! output at:
//!
//! * state tokens: action, expectile return and return-bin logits
//! * action tokens: next state
//!
//! The SIL variant feeds the state-token embeddings (before any attention
//! block) to its RND pair; TIL feeds the transformer output at state tokens.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::block::{Block, BlockCache, SeqShape};
use super::config::ToyEdtConfig;
use super::env::TrajectoryBatch;
use crate::error::{Error, Result};
use crate::linalg::{gemm, Matrix};
use crate::nn::{join, Linear, Parameters};
use crate::rnd::{MlpNetwork, RndPair};
use crate::variant::ModelVariant;

pub const TOKENS_PER_STEP: usize = 3;

/// Everything trainable except the RND predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct EdtNet {
    pub embed_return: Linear,
    pub embed_state: Linear,
    pub embed_action: Linear,
    /// `context_length × embed_dim`
    pub position: Matrix,
    pub blocks: Vec<Block>,
    pub action_head: Linear,
    pub state_head: Linear,
    pub expectile_head: Linear,
    pub return_head: Linear,
}

impl Parameters for EdtNet {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.embed_return.visit(&join(prefix, "embed_return"), out);
        self.embed_state.visit(&join(prefix, "embed_state"), out);
        self.embed_action.visit(&join(prefix, "embed_action"), out);
        out.push((join(prefix, "position"), &self.position.data));
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("blocks.{i}")), out);
        }
        self.action_head.visit(&join(prefix, "action_head"), out);
        self.state_head.visit(&join(prefix, "state_head"), out);
        self.expectile_head.visit(&join(prefix, "expectile_head"), out);
        self.return_head.visit(&join(prefix, "return_head"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.embed_return.visit_mut(&join(prefix, "embed_return"), out);
        self.embed_state.visit_mut(&join(prefix, "embed_state"), out);
        self.embed_action.visit_mut(&join(prefix, "embed_action"), out);
        out.push((join(prefix, "position"), &mut self.position.data));
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("blocks.{i}")), out);
        }
        self.action_head.visit_mut(&join(prefix, "action_head"), out);
        self.state_head.visit_mut(&join(prefix, "state_head"), out);
        self.expectile_head.visit_mut(&join(prefix, "expectile_head"), out);
        self.return_head.visit_mut(&join(prefix, "return_head"), out);
    }
}

pub const PREDICTOR_PREFIX: &str = "rnd.predictor";

/// Gradients of every trainable parameter. Walks in the same order as
/// [`ToyEdtModel::trainable_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub net: EdtNet,
    pub predictor: Option<MlpNetwork>,
}

impl Parameters for ModelGrads {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.net.visit(prefix, out);
        if let Some(p) = &self.predictor {
            p.visit(&join(prefix, PREDICTOR_PREFIX), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.net.visit_mut(prefix, out);
        if let Some(p) = &mut self.predictor {
            p.visit_mut(&join(prefix, PREDICTOR_PREFIX), out);
        }
    }
}

impl ModelGrads {
    pub fn global_norm(&self) -> f64 {
        self.named_params()
            .iter()
            .flat_map(|(_, g)| g.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyEdtModel {
    pub config: ToyEdtConfig,
    pub net: EdtNet,
    pub rnd: Option<RndPair>,
}

/// Interleaved token embeddings for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    /// `batch · 3·len` rows of width `embed_dim`.
    pub tokens: Matrix,
    pub batch: usize,
    pub len: usize,
}

impl TokenSequence {
    pub fn seq_len(&self) -> usize {
        TOKENS_PER_STEP * self.len
    }

    /// Rows holding state tokens, `batch · len` of them.
    pub fn state_rows(&self) -> Matrix {
        gather(&self.tokens, self.batch, self.len, 1)
    }
}

/// Per-position transformer outputs.
pub struct TransformerOutput {
    pub hidden: Matrix,
    pub batch: usize,
    pub len: usize,
    pub caches: Vec<BlockCache>,
}

impl TransformerOutput {
    pub fn state_rows(&self) -> Matrix {
        gather(&self.hidden, self.batch, self.len, 1)
    }

    pub fn action_rows(&self) -> Matrix {
        gather(&self.hidden, self.batch, self.len, 2)
    }

    /// Attention weights of block `block`, one `seq × seq` matrix per
    /// `(sample, head)`.
    pub fn attention(&self, block: usize) -> &[Matrix] {
        &self.caches[block].probs
    }
}

fn gather(m: &Matrix, batch: usize, len: usize, offset: usize) -> Matrix {
    let mut out = Matrix::zeros(batch * len, m.cols);
    for i in 0..batch * len {
        out.row_mut(i).copy_from_slice(m.row(TOKENS_PER_STEP * i + offset));
    }
    out
}

pub(crate) fn scatter_add(dst: &mut Matrix, src: &Matrix, offset: usize) {
    for i in 0..src.rows {
        let row = dst.row_mut(TOKENS_PER_STEP * i + offset);
        for (d, s) in row.iter_mut().zip(src.row(i)) {
            *d += s;
        }
    }
}

impl ToyEdtModel {
    pub fn new(config: ToyEdtConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, std) = (config.embed_dim, config.init_std);
        let pos_dist = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let position = Matrix::from_vec(
            config.context_length,
            d,
            (0..config.context_length * d).map(|_| pos_dist.sample(&mut rng)).collect(),
        );
        let net = EdtNet {
            embed_return: Linear::normal(1, d, std, &mut rng),
            embed_state: Linear::normal(config.state_dim, d, std, &mut rng),
            embed_action: Linear::normal(config.action_dim, d, std, &mut rng),
            position,
            blocks: (0..config.num_attention_blocks).map(|_| Block::new(d, std, &mut rng)).collect(),
            action_head: Linear::normal(d, config.action_dim, std, &mut rng),
            state_head: Linear::normal(d, config.state_dim, std, &mut rng),
            expectile_head: Linear::normal(d, 1, std, &mut rng),
            return_head: Linear::normal(d, config.return_bins, std, &mut rng),
        };
        let rnd = match config.rnd {
            Some(rc) => Some(RndPair::new(rc, &mut rng)?),
            None => None,
        };
        Ok(ToyEdtModel { config, net, rnd })
    }

    pub fn variant(&self) -> ModelVariant {
        self.config.variant
    }

    pub fn trainable_params(&self) -> Vec<(String, &[f64])> {
        let mut v = Vec::new();
        self.net.visit("", &mut v);
        if let Some(r) = &self.rnd {
            r.predictor.visit(PREDICTOR_PREFIX, &mut v);
        }
        v
    }

    pub fn trainable_params_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut v = Vec::new();
        self.net.visit_mut("", &mut v);
        if let Some(r) = &mut self.rnd {
            r.predictor.visit_mut(PREDICTOR_PREFIX, &mut v);
        }
        v
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable_params().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            net: self.net.zeros_like(),
            predictor: self.rnd.as_ref().map(|r| r.predictor.zeros_like()),
        }
    }

    pub(crate) fn check_batch(&self, batch: &TrajectoryBatch) -> Result<()> {
        let c = &self.config;
        if batch.state_dim != c.state_dim || batch.action_dim != c.action_dim {
            return Err(Error::Shape(format!(
                "batch dims ({}, {}) do not match model ({}, {})",
                batch.state_dim, batch.action_dim, c.state_dim, c.action_dim
            )));
        }
        if batch.len > c.context_length {
            return Err(Error::ContextOverflow {
                len: TOKENS_PER_STEP * batch.len,
                max: TOKENS_PER_STEP * c.context_length,
            });
        }
        batch.validate(c.return_bins)
    }

    /// Token embeddings plus positional rows. The state-token rows are the
    /// SIL tap.
    pub fn embed_tokens(&self, batch: &TrajectoryBatch) -> Result<TokenSequence> {
        self.check_batch(batch)?;
        let (b, t) = (batch.batch, batch.len);
        let n = b * t;
        let rtg = Matrix::from_vec(
            n,
            1,
            batch.returns_to_go.iter().map(|r| r / self.config.return_scale).collect(),
        );
        let states = Matrix::from_vec(n, batch.state_dim, batch.states.clone());
        let actions = Matrix::from_vec(n, batch.action_dim, batch.actions.clone());
        let er = self.net.embed_return.forward(&rtg);
        let es = self.net.embed_state.forward(&states);
        let ea = self.net.embed_action.forward(&actions);
        let d = self.config.embed_dim;
        let mut tokens = Matrix::zeros(TOKENS_PER_STEP * n, d);
        for i in 0..n {
            let pos = self.net.position.row(i % t);
            for (k, src) in [&er, &es, &ea].into_iter().enumerate() {
                let row = tokens.row_mut(TOKENS_PER_STEP * i + k);
                for ((o, x), p) in row.iter_mut().zip(src.row(i)).zip(pos) {
                    *o = x + p;
                }
            }
        }
        Ok(TokenSequence { tokens, batch: b, len: t })
    }

    /// Runs the causal attention blocks over an embedded sequence.
    pub fn transformer_forward(&self, seq: &TokenSequence) -> Result<TransformerOutput> {
        let max = TOKENS_PER_STEP * self.config.context_length;
        if seq.seq_len() > max {
            return Err(Error::ContextOverflow { len: seq.seq_len(), max });
        }
        if seq.tokens.cols != self.config.embed_dim || seq.tokens.rows != seq.batch * seq.seq_len() {
            return Err(Error::Shape("token matrix does not match declared sequence shape".into()));
        }
        let shape = self.seq_shape(seq.batch, seq.len);
        let mut h = seq.tokens.clone();
        let mut caches = Vec::with_capacity(self.net.blocks.len());
        for block in &self.net.blocks {
            let (next, cache) = block.forward(&h, shape);
            caches.push(cache);
            h = next;
        }
        Ok(TransformerOutput { hidden: h, batch: seq.batch, len: seq.len, caches })
    }

    pub(crate) fn seq_shape(&self, batch: usize, len: usize) -> SeqShape {
        SeqShape { batch, seq: TOKENS_PER_STEP * len, heads: self.config.num_heads }
    }

    /// Backpropagates through the blocks, accumulating into `grads`.
    pub(crate) fn transformer_backward(&self, out: &TransformerOutput, dh: Matrix, grads: &mut ModelGrads) -> Matrix {
        let shape = self.seq_shape(out.batch, out.len);
        let mut d = dh;
        for (i, block) in self.net.blocks.iter().enumerate().rev() {
            d = block.backward(&out.caches[i], &d, shape, &mut grads.net.blocks[i]);
        }
        d
    }

    /// Backpropagates token gradients into the embedders and positional table.
    pub(crate) fn embed_backward(&self, batch: &TrajectoryBatch, dtokens: &Matrix, grads: &mut ModelGrads) {
        let (b, t) = (batch.batch, batch.len);
        let n = b * t;
        let d = self.config.embed_dim;
        let mut dr = Matrix::zeros(n, d);
        let mut ds = Matrix::zeros(n, d);
        let mut da = Matrix::zeros(n, d);
        for i in 0..n {
            let pos = grads.net.position.row_mut(i % t);
            for (k, dst) in [&mut dr, &mut ds, &mut da].into_iter().enumerate() {
                let src = dtokens.row(TOKENS_PER_STEP * i + k);
                dst.row_mut(i).copy_from_slice(src);
                for (p, s) in pos.iter_mut().zip(src) {
                    *p += s;
                }
            }
        }
        let rtg = Matrix::from_vec(
            n,
            1,
            batch.returns_to_go.iter().map(|r| r / self.config.return_scale).collect(),
        );
        let states = Matrix::from_vec(n, batch.state_dim, batch.states.clone());
        let actions = Matrix::from_vec(n, batch.action_dim, batch.actions.clone());
        for (x, dy, g) in [
            (&rtg, &dr, &mut grads.net.embed_return),
            (&states, &ds, &mut grads.net.embed_state),
            (&actions, &da, &mut grads.net.embed_action),
        ] {
            gemm(x, true, dy, false, &mut g.weight, 1.0);
            for (gb, s) in g.bias.iter_mut().zip(dy.column_sums()) {
                *gb += s;
            }
        }
    }

    /// Head outputs at every step, for inference.
    pub fn predict(&self, batch: &TrajectoryBatch) -> Result<Predictions> {
        let seq = self.embed_tokens(batch)?;
        let out = self.transformer_forward(&seq)?;
        let hs = out.state_rows();
        let ha = out.action_rows();
        let expectile = self.net.expectile_head.forward(&hs);
        Ok(Predictions {
            actions: self.net.action_head.forward(&hs),
            next_states: self.net.state_head.forward(&ha),
            returns: expectile.data.iter().map(|r| r * self.config.return_scale).collect(),
            return_logits: self.net.return_head.forward(&hs),
            state_embeddings: seq.state_rows(),
        })
    }
}

/// Per-step head outputs; rows are `batch · len` in sample-major order.
pub struct Predictions {
    pub actions: Matrix,
    pub next_states: Matrix,
    /// Expectile return estimates in raw (unscaled) return units.
    pub returns: Vec<f64>,
    pub return_logits: Matrix,
    pub state_embeddings: Matrix,
}
