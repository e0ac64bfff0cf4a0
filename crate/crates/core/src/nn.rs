//! Layers with hand-written backward passes.
//!
//! Every layer stores its gradients in a value of its own type (see
//! [`Parameters::zeros_like`]), so optimiser state, gradient checks and
//! checkpoints all walk parameters through the same visitor.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::linalg::{gemm, Matrix};

/// Walks named parameter tensors in a fixed order.
pub trait Parameters {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>);

    fn named_params(&self) -> Vec<(String, &[f64])> {
        let mut v = Vec::new();
        self.visit("", &mut v);
        v
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut v = Vec::new();
        self.visit_mut("", &mut v);
        v
    }

    fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    /// Same structure, every entry zero. Used as a gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        for (_, p) in z.named_params_mut() {
            p.fill(0.0);
        }
        z
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Affine map `y = x·W + b` on row batches; `W` is `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear { weight: Matrix::zeros(input, output), bias: vec![0.0; output] }
    }

    /// Weights drawn from `N(0, std²)`, zero bias.
    pub fn normal<R: Rng + ?Sized>(input: usize, output: usize, std: f64, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, std).expect("finite std");
        let data = (0..input * output).map(|_| dist.sample(rng)).collect();
        Linear { weight: Matrix::from_vec(input, output, data), bias: vec![0.0; output] }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul(&self.weight);
        y.add_row_vector(&self.bias);
        y
    }

    /// Accumulates parameter gradients into `grad` (if given) and returns
    /// the gradient with respect to `x`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grad: Option<&mut Linear>) -> Matrix {
        if let Some(g) = grad {
            gemm(x, true, dy, false, &mut g.weight, 1.0);
            for (gb, s) in g.bias.iter_mut().zip(dy.column_sums()) {
                *gb += s;
            }
        }
        dy.matmul_t(&self.weight)
    }
}

impl Parameters for Linear {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((join(prefix, "weight"), &self.weight.data));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((join(prefix, "weight"), &mut self.weight.data));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub struct LayerNormCache {
    normed: Matrix,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm { gamma: vec![1.0; dim], beta: vec![0.0; dim] }
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, LayerNormCache) {
        let d = x.cols;
        let mut normed = Matrix::zeros(x.rows, d);
        let mut out = Matrix::zeros(x.rows, d);
        let mut inv_std = Vec::with_capacity(x.rows);
        for r in 0..x.rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            let nrow = normed.row_mut(r);
            for (n, v) in nrow.iter_mut().zip(row) {
                *n = (v - mean) * is;
            }
            let orow = out.row_mut(r);
            for c in 0..d {
                orow[c] = normed.data[r * d + c] * self.gamma[c] + self.beta[c];
            }
        }
        (out, LayerNormCache { normed, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Matrix, grad: &mut LayerNorm) -> Matrix {
        let d = dy.cols;
        let mut dx = Matrix::zeros(dy.rows, d);
        for r in 0..dy.rows {
            let g = dy.row(r);
            let n = cache.normed.row(r);
            let mut sum_dn = 0.0;
            let mut sum_dn_n = 0.0;
            for c in 0..d {
                grad.gamma[c] += g[c] * n[c];
                grad.beta[c] += g[c];
                let dn = g[c] * self.gamma[c];
                sum_dn += dn;
                sum_dn_n += dn * n[c];
            }
            let is = cache.inv_std[r];
            let dxr = dx.row_mut(r);
            for c in 0..d {
                let dn = g[c] * self.gamma[c];
                dxr[c] = is * (dn - sum_dn / d as f64 - n[c] * sum_dn_n / d as f64);
            }
        }
        dx
    }
}

impl Parameters for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((join(prefix, "gamma"), &self.gamma));
        out.push((join(prefix, "beta"), &self.beta));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((join(prefix, "gamma"), &mut self.gamma));
        out.push((join(prefix, "beta"), &mut self.beta));
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU, evaluated as `x·σ(2u)`, which equals
/// `½x(1 + tanh u)` and needs a single `exp`.
pub fn gelu(x: f64) -> f64 {
    x * sigmoid(2.0 * gelu_inner(x))
}

pub fn gelu_grad(x: f64) -> f64 {
    let s = sigmoid(2.0 * gelu_inner(x));
    s + x * s * (1.0 - s) * 2.0 * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn gelu_inner(x: f64) -> f64 {
    GELU_C * (x + 0.044715 * x * x * x)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Exponential linear unit with `α = 1`.
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}
