//! Random network distillation: a trainable predictor MLP regressed onto a
//! frozen, randomly initialised target map.
//!
//! The intrinsic loss is the squared Euclidean distance between the two
//! outputs, averaged over batch rows. Only the predictor ever receives
//! parameter gradients; the target backpropagates into its *input* so that
//! the loss can shape whatever representation feeds it.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{elu, elu_grad, join, Linear, Parameters};

pub const DEFAULT_HIDDEN_WIDTH: usize = 512;
pub const DEFAULT_PREDICTOR_DEPTH: usize = 3;

/// Gain applied to every orthogonally initialised RND layer.
pub fn rnd_gain() -> f64 {
    2f64.sqrt()
}

/// A `rows × cols` matrix with orthonormal rows (if `rows ≤ cols`) or
/// orthonormal columns (otherwise), scaled by `gain`.
///
/// Built from the QR factorisation of a Gaussian matrix, with `Q`'s columns
/// sign-corrected so that `R` has a non-negative diagonal.
pub fn orthogonal_init<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::Shape(format!("orthogonal_init: {rows}x{cols}")));
    }
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(tall, short, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
            out.set(i, j, gain * v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RndConfig {
    pub predictor_depth: usize,
    pub hidden_width: usize,
    pub input_dim: usize,
}

impl RndConfig {
    pub fn new(input_dim: usize) -> Self {
        RndConfig {
            predictor_depth: DEFAULT_PREDICTOR_DEPTH,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.predictor_depth == 0 || self.hidden_width == 0 || self.input_dim == 0 {
            return Err(Error::Config(format!("invalid RND config {self:?}")));
        }
        Ok(())
    }
}

/// Affine layers with ELU between them (none after the last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    pub layers: Vec<Linear>,
}

pub struct MlpCache {
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Pre-activation output of each hidden layer.
    pre: Vec<Matrix>,
}

impl MlpNetwork {
    /// `depth` orthogonally initialised layers `input → width → … → width`,
    /// zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(input: usize, width: usize, depth: usize, gain: f64, rng: &mut R) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Shape("MLP depth must be at least 1".into()));
        }
        let mut layers = Vec::with_capacity(depth);
        let mut fan_in = input;
        for _ in 0..depth {
            let weight = orthogonal_init(fan_in, width, gain, rng)?;
            layers.push(Linear { weight, bias: vec![0.0; width] });
            fan_in = width;
        }
        Ok(MlpNetwork { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::output_dim)
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        if x.cols != self.input_dim() {
            return Err(Error::Shape(format!(
                "MLP expects width {}, got {}",
                self.input_dim(),
                x.cols
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h);
            inputs.push(h);
            if i + 1 < self.layers.len() {
                let mut a = z.clone();
                a.data.iter_mut().for_each(|v| *v = elu(*v));
                pre.push(z);
                h = a;
            } else {
                h = z;
            }
        }
        Ok((h, MlpCache { inputs, pre }))
    }

    /// Backpropagates `dy`; parameter gradients are accumulated into `grad`
    /// when given. Returns the input gradient.
    pub fn backward(&self, cache: &MlpCache, dy: &Matrix, mut grad: Option<&mut MlpNetwork>) -> Matrix {
        let mut d = dy.clone();
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                for (g, z) in d.data.iter_mut().zip(&cache.pre[i].data) {
                    *g *= elu_grad(*z);
                }
            }
            let g = grad.as_deref_mut().map(|g| &mut g.layers[i]);
            d = self.layers[i].backward(&cache.inputs[i], &d, g);
        }
        d
    }
}

impl Parameters for MlpNetwork {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("layers.{i}")), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("layers.{i}")), out);
        }
    }
}

/// Predictor/target pair. The target is private so nothing outside this
/// module can mutate it after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RndPair {
    pub predictor: MlpNetwork,
    target: MlpNetwork,
    pub config: RndConfig,
}

/// Result of a combined loss/gradient evaluation.
pub struct IntrinsicGrad {
    pub loss: f64,
    pub predictor: MlpNetwork,
    /// Gradient of the loss with respect to the input rows.
    pub input: Matrix,
}

impl RndPair {
    pub fn new<R: Rng + ?Sized>(config: RndConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let gain = rnd_gain();
        let target = MlpNetwork::orthogonal(config.input_dim, config.hidden_width, 1, gain, rng)?;
        let predictor = MlpNetwork::orthogonal(
            config.input_dim,
            config.hidden_width,
            config.predictor_depth,
            gain,
            rng,
        )?;
        Ok(RndPair { predictor, target, config })
    }

    /// Reassembles a pair from stored parts (checkpoint loading).
    pub fn from_parts(config: RndConfig, predictor: MlpNetwork, target: MlpNetwork) -> Result<Self> {
        config.validate()?;
        if target.layers.len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "RND target must have 1 layer, found {}",
                target.layers.len()
            )));
        }
        if predictor.layers.len() != config.predictor_depth {
            return Err(Error::ShapeMismatch(format!(
                "predictor depth {} but config says {}",
                predictor.layers.len(),
                config.predictor_depth
            )));
        }
        if predictor.input_dim() != target.input_dim()
            || predictor.output_dim() != target.output_dim()
            || predictor.input_dim() != config.input_dim
        {
            return Err(Error::ShapeMismatch("predictor and target shapes differ".into()));
        }
        Ok(RndPair { predictor, target, config })
    }

    pub fn target(&self) -> &MlpNetwork {
        &self.target
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.rows == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if x.cols != self.config.input_dim {
            return Err(Error::Shape(format!(
                "RND expects width {}, got {}",
                self.config.input_dim, x.cols
            )));
        }
        Ok(())
    }

    /// Mean over rows of `‖f_pred(x) − f_target(x)‖²`.
    pub fn intrinsic_loss(&self, x: &Matrix) -> Result<f64> {
        self.check_input(x)?;
        let p = self.predictor.forward(x)?;
        let t = self.target.forward(x)?;
        let sq: f64 = p.data.iter().zip(&t.data).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(sq / x.rows as f64)
    }

    /// Loss, predictor gradients and input gradient in one pass.
    pub fn loss_and_grad(&self, x: &Matrix) -> Result<IntrinsicGrad> {
        self.check_input(x)?;
        let (p, pc) = self.predictor.forward_cached(x)?;
        let (t, tc) = self.target.forward_cached(x)?;
        let n = x.rows as f64;
        let mut diff = p;
        let mut sq = 0.0;
        for (a, b) in diff.data.iter_mut().zip(&t.data) {
            *a -= b;
            sq += *a * *a;
        }
        diff.scale(2.0 / n);
        let mut grad = self.predictor.zeros_like();
        let mut dx = self.predictor.backward(&pc, &diff, Some(&mut grad));
        diff.scale(-1.0);
        dx.add_assign(&self.target.backward(&tc, &diff, None));
        Ok(IntrinsicGrad { loss: sq / n, predictor: grad, input: dx })
    }

    /// Gradients of [`RndPair::intrinsic_loss`] for the predictor only.
    pub fn predictor_gradients(&self, x: &Matrix) -> Result<MlpNetwork> {
        Ok(self.loss_and_grad(x)?.predictor)
    }
}
