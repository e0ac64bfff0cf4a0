//! Pre-norm causal self-attention block.
//!
//! ```text
//! x → LN → MultiHeadAttn → (+x) → LN → Linear → GELU → Linear → (+)
//! ```
//!
//! Inputs are `batch · seq` rows stacked sample-major. Attention for
//! position `i` only ever reads rows `j ≤ i` of the same sample, and the
//! softmax is taken over exactly those rows, so later positions cannot
//! influence earlier outputs even at the bit level.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, Matrix};
use crate::nn::{gelu, gelu_grad, join, LayerNorm, LayerNormCache, Linear, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub ln1: LayerNorm,
    /// Fused query/key/value projection, `d × 3d`.
    pub qkv: Linear,
    pub proj: Linear,
    pub ln2: LayerNorm,
    pub fc: Linear,
    pub out: Linear,
}

pub struct BlockCache {
    ln1: LayerNormCache,
    normed1: Matrix,
    qkv: Matrix,
    /// Row-stochastic attention weights per `(sample, head)`, each `seq × seq`
    /// with zeros above the diagonal.
    pub probs: Vec<Matrix>,
    attn: Matrix,
    ln2: LayerNormCache,
    normed2: Matrix,
    pre_gelu: Matrix,
    post_gelu: Matrix,
}

#[derive(Debug, Clone, Copy)]
pub struct SeqShape {
    pub batch: usize,
    pub seq: usize,
    pub heads: usize,
}

impl Block {
    pub fn new<R: Rng + ?Sized>(dim: usize, std: f64, rng: &mut R) -> Self {
        Block {
            ln1: LayerNorm::new(dim),
            qkv: Linear::normal(dim, 3 * dim, std, rng),
            proj: Linear::normal(dim, dim, std, rng),
            ln2: LayerNorm::new(dim),
            fc: Linear::normal(dim, 4 * dim, std, rng),
            out: Linear::normal(4 * dim, dim, std, rng),
        }
    }

    pub fn forward(&self, x: &Matrix, shape: SeqShape) -> (Matrix, BlockCache) {
        let d = x.cols;
        let dh = d / shape.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (normed1_out, ln1) = self.ln1.forward(x);
        let qkv = self.qkv.forward(&normed1_out);
        let mut attn = Matrix::zeros(x.rows, d);
        let mut probs = Vec::with_capacity(shape.batch * shape.heads);
        let mut scores = vec![0.0; shape.seq];
        for b in 0..shape.batch {
            let base = b * shape.seq;
            for h in 0..shape.heads {
                let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
                let mut p = Matrix::zeros(shape.seq, shape.seq);
                for i in 0..shape.seq {
                    let q = &qkv.row(base + i)[qo..qo + dh];
                    let mut max = f64::NEG_INFINITY;
                    for (j, s) in scores.iter_mut().enumerate().take(i + 1) {
                        *s = dot(q, &qkv.row(base + j)[ko..ko + dh]) * scale;
                        max = max.max(*s);
                    }
                    let mut sum = 0.0;
                    for s in scores.iter_mut().take(i + 1) {
                        *s = (*s - max).exp();
                        sum += *s;
                    }
                    let prow = p.row_mut(i);
                    for j in 0..=i {
                        prow[j] = scores[j] / sum;
                    }
                    let out = &mut attn.row_mut(base + i)[qo..qo + dh];
                    for j in 0..=i {
                        let w = p.get(i, j);
                        let v = &qkv.row(base + j)[vo..vo + dh];
                        for (o, vv) in out.iter_mut().zip(v) {
                            *o += w * vv;
                        }
                    }
                }
                probs.push(p);
            }
        }
        let mut h1 = self.proj.forward(&attn);
        h1.add_assign(x);
        let (normed2, ln2) = self.ln2.forward(&h1);
        let pre_gelu = self.fc.forward(&normed2);
        let mut post_gelu = pre_gelu.clone();
        post_gelu.data.iter_mut().for_each(|v| *v = gelu(*v));
        let mut y = self.out.forward(&post_gelu);
        y.add_assign(&h1);
        let cache = BlockCache {
            ln1,
            normed1: normed1_out,
            qkv,
            probs,
            attn,
            ln2,
            normed2,
            pre_gelu,
            post_gelu,
        };
        (y, cache)
    }

    pub fn backward(&self, cache: &BlockCache, dy: &Matrix, shape: SeqShape, grad: &mut Block) -> Matrix {
        let d = dy.cols;
        let dh = d / shape.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        // MLP branch
        let mut dg = self.out.backward(&cache.post_gelu, dy, Some(&mut grad.out));
        for (g, z) in dg.data.iter_mut().zip(&cache.pre_gelu.data) {
            *g *= gelu_grad(*z);
        }
        let dn2 = self.fc.backward(&cache.normed2, &dg, Some(&mut grad.fc));
        let mut dh1 = self.ln2.backward(&cache.ln2, &dn2, &mut grad.ln2);
        dh1.add_assign(dy);

        // attention branch
        let dattn = self.proj.backward(&cache.attn, &dh1, Some(&mut grad.proj));
        let mut dqkv = Matrix::zeros(cache.qkv.rows, cache.qkv.cols);
        let qkv = &cache.qkv;
        let mut dp = vec![0.0; shape.seq];
        for b in 0..shape.batch {
            let base = b * shape.seq;
            for h in 0..shape.heads {
                let p = &cache.probs[b * shape.heads + h];
                let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
                for i in 0..shape.seq {
                    let dout = &dattn.row(base + i)[qo..qo + dh];
                    let mut weighted = 0.0;
                    for j in 0..=i {
                        dp[j] = dot(dout, &qkv.row(base + j)[vo..vo + dh]);
                        weighted += p.get(i, j) * dp[j];
                    }
                    for j in 0..=i {
                        let pij = p.get(i, j);
                        // dV_j += p_ij · dO_i
                        {
                            let dv = &mut dqkv.row_mut(base + j)[vo..vo + dh];
                            for (a, o) in dv.iter_mut().zip(dout) {
                                *a += pij * o;
                            }
                        }
                        let ds = pij * (dp[j] - weighted) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for c in 0..dh {
                            let kj = qkv.get(base + j, ko + c);
                            let qi = qkv.get(base + i, qo + c);
                            dqkv.data[(base + i) * 3 * d + qo + c] += ds * kj;
                            dqkv.data[(base + j) * 3 * d + ko + c] += ds * qi;
                        }
                    }
                }
            }
        }
        let dn1 = self.qkv.backward(&cache.normed1, &dqkv, Some(&mut grad.qkv));
        let mut dx = self.ln1.backward(&cache.ln1, &dn1, &mut grad.ln1);
        dx.add_assign(&dh1);
        dx
    }
}

impl Parameters for Block {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.ln1.visit(&join(prefix, "ln1"), out);
        self.qkv.visit(&join(prefix, "attn.qkv"), out);
        self.proj.visit(&join(prefix, "attn.proj"), out);
        self.ln2.visit(&join(prefix, "ln2"), out);
        self.fc.visit(&join(prefix, "mlp.fc"), out);
        self.out.visit(&join(prefix, "mlp.out"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.ln1.visit_mut(&join(prefix, "ln1"), out);
        self.qkv.visit_mut(&join(prefix, "attn.qkv"), out);
        self.proj.visit_mut(&join(prefix, "attn.proj"), out);
        self.ln2.visit_mut(&join(prefix, "ln2"), out);
        self.fc.visit_mut(&join(prefix, "mlp.fc"), out);
        self.out.visit_mut(&join(prefix, "mlp.out"), out);
    }
}
