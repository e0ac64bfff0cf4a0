//! Linear-Gaussian environments and offline datasets rolled out from them.
//!
//! `s' = A s + B a + w`, `a = K s + v`, `r = wᵣ·s − c‖a‖²` with Gaussian
//! process noise `w` and behaviour noise `v`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Tolerance above 1 before a dynamics matrix counts as unstable.
const RADIUS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEnvSpec {
    pub name: String,
    /// Dataset tier label carried into provenance (e.g. `medium`).
    pub dataset: String,
    pub state_dim: usize,
    pub action_dim: usize,
    /// `state_dim × state_dim`
    pub dynamics: Matrix,
    /// `state_dim × action_dim`
    pub control: Matrix,
    /// Behaviour-policy gain, `action_dim × state_dim`.
    pub policy_gain: Matrix,
    pub process_noise: f64,
    pub policy_noise: f64,
    pub initial_state_scale: f64,
    pub reward_weights: Vec<f64>,
    pub action_cost: f64,
    pub episode_length: usize,
    pub seed: u64,
}

impl SyntheticEnvSpec {
    /// A random stable system: `A` is Gaussian rescaled to spectral radius
    /// `radius`; the other matrices are Gaussian with `1/√fan_in` scale.
    pub fn random(name: &str, dataset: &str, state_dim: usize, action_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e7d0);
        let gauss = |rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng| {
            let data = (0..rows * cols)
                .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng))
                .collect::<Vec<f64>>();
            Matrix::from_vec(rows, cols, data)
        };
        let mut a = gauss(state_dim, state_dim, 1.0, &mut rng);
        let radius = spectral_radius(&a)?;
        if radius > 0.0 {
            a.scale(0.9 / radius);
        }
        let b = gauss(state_dim, action_dim, 1.0 / (action_dim as f64).sqrt(), &mut rng);
        let k = gauss(action_dim, state_dim, 0.3 / (state_dim as f64).sqrt(), &mut rng);
        let w = gauss(1, state_dim, 1.0 / (state_dim as f64).sqrt(), &mut rng).data;
        Ok(SyntheticEnvSpec {
            name: name.to_string(),
            dataset: dataset.to_string(),
            state_dim,
            action_dim,
            dynamics: a,
            control: b,
            policy_gain: k,
            process_noise: 0.1,
            policy_noise: 0.3,
            initial_state_scale: 1.0,
            reward_weights: w,
            action_cost: 0.1,
            episode_length: 50,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (s, a) = (self.state_dim, self.action_dim);
        let shape = |m: &Matrix, r: usize, c: usize, what: &str| {
            if (m.rows, m.cols) != (r, c) {
                Err(Error::Shape(format!("{what} is {}x{}, expected {r}x{c}", m.rows, m.cols)))
            } else {
                Ok(())
            }
        };
        if s == 0 || a == 0 {
            return Err(Error::Shape("state_dim and action_dim must be positive".into()));
        }
        shape(&self.dynamics, s, s, "dynamics")?;
        shape(&self.control, s, a, "control")?;
        shape(&self.policy_gain, a, s, "policy_gain")?;
        if self.reward_weights.len() != s {
            return Err(Error::Shape(format!(
                "reward_weights has {} entries, expected {s}",
                self.reward_weights.len()
            )));
        }
        let finite = self.dynamics.is_finite()
            && self.control.is_finite()
            && self.policy_gain.is_finite()
            && self.reward_weights.iter().all(|x| x.is_finite())
            && [self.process_noise, self.policy_noise, self.initial_state_scale, self.action_cost]
                .iter()
                .all(|x| x.is_finite() && *x >= 0.0);
        if !finite {
            return Err(Error::InvalidData("environment parameters must be finite, scales nonnegative".into()));
        }
        if self.episode_length == 0 {
            return Err(Error::Config("episode_length must be at least 1".into()));
        }
        let radius = spectral_radius(&self.dynamics)?;
        if radius > 1.0 + RADIUS_SLACK {
            return Err(Error::UnstableDynamics(radius));
        }
        Ok(())
    }

    pub fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        dot(&self.reward_weights, state) - self.action_cost * dot(action, action)
    }

    /// Deterministic part of the transition plus sampled process noise.
    pub fn step<R: Rng + ?Sized>(&self, state: &[f64], action: &[f64], rng: &mut R) -> Vec<f64> {
        let mut next = vec![0.0; self.state_dim];
        for (i, n) in next.iter_mut().enumerate() {
            *n = dot(self.dynamics.row(i), state) + dot(self.control.row(i), action);
            if self.process_noise > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                *n += self.process_noise * z;
            }
        }
        next
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.state_dim)
            .map(|_| {
                if self.initial_state_scale > 0.0 {
                    let z: f64 = StandardNormal.sample(rng);
                    self.initial_state_scale * z
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn behavior_action<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Vec<f64> {
        (0..self.action_dim)
            .map(|j| {
                let mut a = dot(self.policy_gain.row(j), state);
                if self.policy_noise > 0.0 {
                    let z: f64 = StandardNormal.sample(rng);
                    a += self.policy_noise * z;
                }
                a
            })
            .collect()
    }
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    if m.rows != m.cols {
        return Err(Error::Shape("spectral radius of a non-square matrix".into()));
    }
    if m.rows == 0 {
        return Ok(0.0);
    }
    let dm = DMatrix::from_row_slice(m.rows, m.cols, &m.data);
    let eig = dm.complex_eigenvalues();
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// One full episode, row-major per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Matrix,
    pub actions: Matrix,
    pub next_states: Matrix,
    pub rewards: Vec<f64>,
    pub returns_to_go: Vec<f64>,
    pub return_bin_labels: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Equal-width bins over `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnBins {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl ReturnBins {
    pub fn label(&self, value: f64) -> usize {
        let width = self.max - self.min;
        if width <= 0.0 || self.count <= 1 {
            return 0;
        }
        let idx = ((value - self.min) / width * self.count as f64).floor();
        (idx.max(0.0) as usize).min(self.count - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub episodes: Vec<Trajectory>,
    pub bins: ReturnBins,
}

/// A batch of equal-length windows, flattened row-major as
/// `[batch][step][feature]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub batch: usize,
    pub len: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub returns_to_go: Vec<f64>,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub next_states: Vec<f64>,
    pub return_bin_labels: Vec<usize>,
}

impl TrajectoryBatch {
    pub fn empty(state_dim: usize, action_dim: usize) -> Self {
        TrajectoryBatch {
            batch: 0,
            len: 0,
            state_dim,
            action_dim,
            returns_to_go: Vec::new(),
            states: Vec::new(),
            actions: Vec::new(),
            next_states: Vec::new(),
            return_bin_labels: Vec::new(),
        }
    }

    pub fn validate(&self, return_bins: usize) -> Result<()> {
        let bt = self.batch * self.len;
        let ok = self.returns_to_go.len() == bt
            && self.states.len() == bt * self.state_dim
            && self.actions.len() == bt * self.action_dim
            && self.next_states.len() == bt * self.state_dim
            && self.return_bin_labels.len() == bt;
        if !ok {
            return Err(Error::Shape("trajectory batch arrays disagree with declared dims".into()));
        }
        if bt == 0 {
            return Err(Error::Shape("empty trajectory batch".into()));
        }
        if self.return_bin_labels.iter().any(|&l| l >= return_bins) {
            return Err(Error::Shape(format!("return bin label outside 0..{return_bins}")));
        }
        let finite = self
            .returns_to_go
            .iter()
            .chain(&self.states)
            .chain(&self.actions)
            .chain(&self.next_states)
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidData("non-finite value in trajectory batch".into()));
        }
        Ok(())
    }

    /// Appends `len` steps of `traj` starting at `start` as a new batch row.
    pub fn push_window(&mut self, traj: &Trajectory, start: usize, len: usize) {
        assert!(self.batch == 0 || self.len == len, "window lengths must match");
        assert!(start + len <= traj.len(), "window past end of episode");
        self.len = len;
        self.batch += 1;
        for t in start..start + len {
            self.returns_to_go.push(traj.returns_to_go[t]);
            self.states.extend_from_slice(traj.states.row(t));
            self.actions.extend_from_slice(traj.actions.row(t));
            self.next_states.extend_from_slice(traj.next_states.row(t));
            self.return_bin_labels.push(traj.return_bin_labels[t]);
        }
    }
}

/// Rolls out the behaviour policy for `episodes` episodes.
pub fn generate_dataset(spec: &SyntheticEnvSpec, episodes: usize, return_bins: usize) -> Result<SyntheticDataset> {
    spec.validate()?;
    if episodes == 0 {
        return Err(Error::Config("episodes must be at least 1".into()));
    }
    if return_bins == 0 {
        return Err(Error::Config("return_bins must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (s_dim, a_dim, len) = (spec.state_dim, spec.action_dim, spec.episode_length);
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut states = Matrix::zeros(len, s_dim);
        let mut actions = Matrix::zeros(len, a_dim);
        let mut next_states = Matrix::zeros(len, s_dim);
        let mut rewards = Vec::with_capacity(len);
        let mut s = spec.initial_state(&mut rng);
        for t in 0..len {
            let a = spec.behavior_action(&s, &mut rng);
            rewards.push(spec.reward(&s, &a));
            let next = spec.step(&s, &a, &mut rng);
            states.row_mut(t).copy_from_slice(&s);
            actions.row_mut(t).copy_from_slice(&a);
            next_states.row_mut(t).copy_from_slice(&next);
            s = next;
        }
        let mut rtg = vec![0.0; len];
        let mut acc = 0.0;
        for t in (0..len).rev() {
            acc += rewards[t];
            rtg[t] = acc;
        }
        if !(states.is_finite() && next_states.is_finite() && acc.is_finite()) {
            return Err(Error::NumericalDivergence("non-finite rollout".into()));
        }
        out.push(Trajectory {
            states,
            actions,
            next_states,
            rewards,
            returns_to_go: rtg,
            return_bin_labels: Vec::new(),
        });
    }
    let (min, max) = out
        .iter()
        .flat_map(|e| e.returns_to_go.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let bins = ReturnBins { min, max, count: return_bins };
    for e in &mut out {
        e.return_bin_labels = e.returns_to_go.iter().map(|&v| bins.label(v)).collect();
    }
    Ok(SyntheticDataset { episodes: out, bins })
}

impl SyntheticDataset {
    /// Random windows of `min(context, episode length)` steps.
    pub fn sample_batch<R: Rng + ?Sized>(&self, batch_size: usize, context: usize, rng: &mut R) -> TrajectoryBatch {
        let first = &self.episodes[0];
        let (s_dim, a_dim) = (first.states.cols, first.actions.cols);
        let len = context.min(self.episodes.iter().map(Trajectory::len).min().unwrap_or(0));
        let mut b = TrajectoryBatch::empty(s_dim, a_dim);
        for _ in 0..batch_size {
            let ep = &self.episodes[rng.random_range(0..self.episodes.len())];
            let start = rng.random_range(0..=ep.len() - len);
            b.push_window(ep, start, len);
        }
        b
    }

    /// Largest `|return-to-go|` in the data; a natural `return_scale`.
    pub fn max_abs_return_to_go(&self) -> f64 {
        self.episodes
            .iter()
            .flat_map(|e| e.returns_to_go.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_episode_return(&self) -> f64 {
        self.episodes.iter().map(Trajectory::total_return).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Mean return of the zero-gain policy that only emits behaviour noise,
/// used as the "random" anchor for normalised scores.
pub fn random_policy_return(spec: &SyntheticEnvSpec, episodes: usize) -> Result<f64> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7a9d_0000);
    let noise = Normal::new(0.0, spec.policy_noise.max(1e-12)).expect("finite noise");
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut s = spec.initial_state(&mut rng);
        for _ in 0..spec.episode_length {
            let a: Vec<f64> = (0..spec.action_dim).map(|_| noise.sample(&mut rng)).collect();
            total += spec.reward(&s, &a);
            s = spec.step(&s, &a, &mut rng);
        }
    }
    Ok(total / episodes.max(1) as f64)
}
