//! The composite training objective and its gradient.
//!
//! `L = w_a·L_action + w_s·L_state + w_e·L_exp + w_r·L_ret + w_i·L_int`
//! with all terms averaged over the `batch · len` positions (and over the
//! feature width for the two squared-error terms).

use serde::{Deserialize, Serialize};

use super::config::LossWeights;
use super::env::TrajectoryBatch;
use super::model::{scatter_add, ModelGrads, ToyEdtModel, TOKENS_PER_STEP};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::Parameters;
use crate::variant::ModelVariant;

/// Asymmetric squared loss `|τ − 1{u < 0}|·u²` with `u = target − predicted`.
pub fn expectile_loss(predicted: f64, target: f64, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidExpectileLevel(level));
    }
    let u = target - predicted;
    Ok(expectile_weight(u, level) * u * u)
}

fn expectile_weight(u: f64, level: f64) -> f64 {
    if u < 0.0 {
        1.0 - level
    } else {
        level
    }
}

/// Unweighted loss terms plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LossComponents {
    pub action: f64,
    pub state: f64,
    pub expectile: f64,
    pub ret: f64,
    pub intrinsic: f64,
    pub total: f64,
}

impl LossComponents {
    pub fn recombine(&self, w: &LossWeights) -> f64 {
        w.action * self.action
            + w.state * self.state
            + w.expectile * self.expectile
            + w.ret * self.ret
            + w.intrinsic * self.intrinsic
    }

    pub fn is_finite(&self) -> bool {
        [self.action, self.state, self.expectile, self.ret, self.intrinsic, self.total]
            .iter()
            .all(|x| x.is_finite())
    }
}

fn mse_with_grad(pred: &Matrix, target: &[f64], weight: f64) -> (f64, Matrix) {
    let n = pred.data.len() as f64;
    let mut grad = Matrix::zeros(pred.rows, pred.cols);
    let mut sum = 0.0;
    for ((g, p), t) in grad.data.iter_mut().zip(&pred.data).zip(target) {
        let diff = p - t;
        sum += diff * diff;
        *g = weight * 2.0 * diff / n;
    }
    (sum / n, grad)
}

/// Mean cross-entropy of `logits` rows against integer labels.
fn cross_entropy_with_grad(logits: &Matrix, labels: &[usize], weight: f64) -> (f64, Matrix) {
    let n = logits.rows as f64;
    let mut grad = Matrix::zeros(logits.rows, logits.cols);
    let mut sum = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + z.ln();
        sum += log_z - row[label];
        let g = grad.row_mut(i);
        for (k, gk) in g.iter_mut().enumerate() {
            let p = (row[k] - log_z).exp();
            *gk = weight * (p - if k == label { 1.0 } else { 0.0 }) / n;
        }
    }
    (sum / n, grad)
}

impl ToyEdtModel {
    /// Loss terms with the configured weights.
    pub fn total_loss(&self, batch: &TrajectoryBatch) -> Result<LossComponents> {
        Ok(self.loss_and_grad(batch, &self.config.loss_weights)?.0)
    }

    /// Loss terms and gradients of `Σ wᵢ Lᵢ` for every trainable parameter.
    pub fn loss_and_grad(&self, batch: &TrajectoryBatch, weights: &LossWeights) -> Result<(LossComponents, ModelGrads)> {
        let seq = self.embed_tokens(batch)?;
        let out = self.transformer_forward(&seq)?;
        let hs = out.state_rows();
        let ha = out.action_rows();
        let net = &self.net;
        let cfg = &self.config;
        let mut grads = self.zero_grads();

        let action_pred = net.action_head.forward(&hs);
        let (l_action, d_action) = mse_with_grad(&action_pred, &batch.actions, weights.action);

        let state_pred = net.state_head.forward(&ha);
        let (l_state, d_state) = mse_with_grad(&state_pred, &batch.next_states, weights.state);

        let exp_pred = net.expectile_head.forward(&hs);
        let n = exp_pred.rows as f64;
        let mut d_exp = Matrix::zeros(exp_pred.rows, 1);
        let mut l_exp = 0.0;
        for (i, (p, r)) in exp_pred.data.iter().zip(&batch.returns_to_go).enumerate() {
            let u = r / cfg.return_scale - p;
            let w = expectile_weight(u, cfg.expectile_level);
            l_exp += w * u * u;
            d_exp.data[i] = -weights.expectile * 2.0 * w * u / n;
        }
        l_exp /= n;

        let logits = net.return_head.forward(&hs);
        let (l_ret, d_logits) = cross_entropy_with_grad(&logits, &batch.return_bin_labels, weights.ret);

        let mut dhs = net.action_head.backward(&hs, &d_action, Some(&mut grads.net.action_head));
        dhs.add_assign(&net.expectile_head.backward(&hs, &d_exp, Some(&mut grads.net.expectile_head)));
        dhs.add_assign(&net.return_head.backward(&hs, &d_logits, Some(&mut grads.net.return_head)));
        let dha = net.state_head.backward(&ha, &d_state, Some(&mut grads.net.state_head));

        let mut l_int = 0.0;
        let mut sil_input_grad = None;
        if let Some(rnd) = &self.rnd {
            let tap = match cfg.variant {
                ModelVariant::Sil => seq.state_rows(),
                ModelVariant::Til => hs.clone(),
                ModelVariant::Baseline => unreachable!("validated config"),
            };
            let mut g = rnd.loss_and_grad(&tap)?;
            l_int = g.loss;
            g.input.scale(weights.intrinsic);
            if let Some(pg) = grads.predictor.as_mut() {
                for ((_, dst), (_, src)) in pg.named_params_mut().into_iter().zip(g.predictor.named_params()) {
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += weights.intrinsic * s;
                    }
                }
            }
            match cfg.variant {
                ModelVariant::Til => dhs.add_assign(&g.input),
                _ => sil_input_grad = Some(g.input),
            }
        }

        let mut dh = Matrix::zeros(out.hidden.rows, out.hidden.cols);
        scatter_add(&mut dh, &dhs, 1);
        scatter_add(&mut dh, &dha, 2);
        let mut dtokens = self.transformer_backward(&out, dh, &mut grads);
        if let Some(g) = sil_input_grad {
            scatter_add(&mut dtokens, &g, 1);
        }
        debug_assert_eq!(dtokens.rows, TOKENS_PER_STEP * batch.batch * batch.len);
        self.embed_backward(batch, &dtokens, &mut grads);

        let mut c = LossComponents {
            action: l_action,
            state: l_state,
            expectile: l_exp,
            ret: l_ret,
            intrinsic: l_int,
            total: 0.0,
        };
        c.total = c.recombine(weights);
        Ok((c, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expectile_branches() {
        assert_eq!(expectile_loss(2.0, 2.0, 0.99).unwrap(), 0.0);
        assert!((expectile_loss(0.0, 1.0, 0.99).unwrap() - 0.99).abs() < 1e-15);
        assert!((expectile_loss(1.0, 0.0, 0.99).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn expectile_level_must_be_open_unit() {
        for level in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(expectile_loss(0.0, 1.0, level), Err(Error::InvalidExpectileLevel(_))));
        }
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let logits = Matrix::zeros(2, 4);
        let (l, g) = cross_entropy_with_grad(&logits, &[0, 3], 1.0);
        assert!((l - 4f64.ln()).abs() < 1e-15);
        assert!((g.get(0, 0) - (0.25 - 1.0) / 2.0).abs() < 1e-15);
        assert!((g.get(1, 1) - 0.25 / 2.0).abs() < 1e-15);
    }
}
