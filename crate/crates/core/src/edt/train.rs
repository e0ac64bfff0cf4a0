//! AdamW with global-norm clipping, the training loop, and a
//! finite-difference gradient check.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{LossWeights, OptimizerConfig};
use super::env::{SyntheticDataset, TrajectoryBatch};
use super::loss::LossComponents;
use super::model::{ModelGrads, ToyEdtModel};
use crate::error::{Error, Result};
use crate::nn::Parameters;

/// Adaptive-moment optimiser with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: OptimizerConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: OptimizerConfig, model: &ToyEdtModel) -> Self {
        let shapes: Vec<usize> = model.trainable_params().iter().map(|(_, p)| p.len()).collect();
        AdamW {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn matches(&self, model: &ToyEdtModel) -> bool {
        let params = model.trainable_params();
        params.len() == self.m.len() && params.iter().zip(&self.m).all(|((_, p), m)| p.len() == m.len())
    }

    /// One update. `grads` must walk in the same order as the model.
    pub fn apply(&mut self, model: &mut ToyEdtModel, grads: &ModelGrads) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let grads = grads.named_params();
        for (((_, p), (_, g)), (m, v)) in model
            .trainable_params_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                p[i] -= c.learning_rate * c.weight_decay * p[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= c.learning_rate * mh / (vh.sqrt() + c.eps);
            }
        }
    }
}

/// Rescales `grads` so that their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads
        .named_params()
        .iter()
        .flat_map(|(_, g)| g.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for (_, g) in grads.named_params_mut() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub loss: LossComponents,
    pub grad_norm: f64,
    pub clipped: bool,
}

/// Gradient of the configured total loss, clipped, then one AdamW update.
///
/// On a non-finite loss or gradient the parameters are left untouched.
pub fn train_step(model: &mut ToyEdtModel, batch: &TrajectoryBatch, opt: &mut AdamW) -> Result<StepReport> {
    if !opt.matches(model) {
        return Err(Error::Shape("optimizer state does not match model parameters".into()));
    }
    let weights = model.config.loss_weights;
    let (loss, mut grads) = model.loss_and_grad(batch, &weights)?;
    if !loss.is_finite() {
        return Err(Error::NumericalDivergence(format!("loss {:?}", loss.total)));
    }
    let grad_norm = clip_global_norm(&mut grads, opt.config.clip_norm);
    if !grad_norm.is_finite() {
        return Err(Error::NumericalDivergence(format!("gradient norm {grad_norm}")));
    }
    opt.apply(model, &grads);
    Ok(StepReport { loss, grad_norm, clipped: grad_norm > opt.config.clip_norm })
}

/// Draws batches from a fixed dataset with a seeded stream.
pub struct Trainer {
    pub model: ToyEdtModel,
    pub optimizer: AdamW,
    pub batch_size: usize,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: ToyEdtModel, optimizer: OptimizerConfig, batch_size: usize) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(model.config.seed.wrapping_add(0x0bad_cafe));
        let optimizer = AdamW::new(optimizer, &model);
        Trainer { model, optimizer, batch_size, rng }
    }

    pub fn next_batch(&mut self, data: &SyntheticDataset) -> TrajectoryBatch {
        data.sample_batch(self.batch_size, self.model.config.context_length, &mut self.rng)
    }

    pub fn step(&mut self, data: &SyntheticDataset) -> Result<StepReport> {
        let batch = self.next_batch(data);
        train_step(&mut self.model, &batch, &mut self.optimizer)
    }

    /// Runs `steps` updates and returns the loss reported at each.
    pub fn run(&mut self, data: &SyntheticDataset, steps: usize) -> Result<Vec<StepReport>> {
        (0..steps).map(|_| self.step(data)).collect()
    }
}

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-5;
/// Entries sampled per parameter tensor (all of them if fewer).
pub const FD_SAMPLES_PER_TENSOR: usize = 200;
/// Gradients smaller than this are compared in absolute terms.
pub const FD_ABS_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a − n| / max(|a|, |n|, FD_ABS_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_ABS_FLOOR)
}

/// Compares analytic gradients of the weighted loss with central finite
/// differences on a seeded subsample of each parameter tensor.
pub fn gradient_check(model: &ToyEdtModel, batch: &TrajectoryBatch, weights: &LossWeights, seed: u64) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_and_grad(batch, weights)?;
    let analytic: Vec<(String, Vec<f64>)> =
        grads.named_params().into_iter().map(|(n, g)| (n, g.to_vec())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (t, (name, g)) in analytic.iter().enumerate() {
        let idx: Vec<usize> = if g.len() <= FD_SAMPLES_PER_TENSOR {
            (0..g.len()).collect()
        } else {
            sample(&mut rng, g.len(), FD_SAMPLES_PER_TENSOR).into_vec()
        };
        for i in idx {
            let orig = probe.trainable_params()[t].1[i];
            probe.trainable_params_mut()[t].1[i] = orig + FD_STEP;
            let plus = probe.loss_and_grad(batch, weights)?.0.total;
            probe.trainable_params_mut()[t].1[i] = orig - FD_STEP;
            let minus = probe.loss_and_grad(batch, weights)?.0.total;
            probe.trainable_params_mut()[t].1[i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let err = relative_error(g[i], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report = GradCheckReport {
                    max_rel_error: err,
                    worst_param: name.clone(),
                    worst_index: i,
                    analytic: g[i],
                    numeric,
                    checked: report.checked,
                };
            }
        }
    }
    Ok(report)
}
