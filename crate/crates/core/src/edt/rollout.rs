//! Greedy evaluation rollouts with elastic history length, and per-step
//! embedding collection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::env::{SyntheticEnvSpec, TrajectoryBatch};
use super::model::ToyEdtModel;
use crate::error::{Error, Result};
use crate::metrics::{EmbeddingSet, Provenance};

/// Steps seen so far in an episode. The newest step's action is unknown
/// at decision time and is stored as zeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub returns_to_go: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
}

impl History {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, rtg: f64, state: Vec<f64>, action_dim: usize) {
        self.returns_to_go.push(rtg);
        self.states.push(state);
        self.actions.push(vec![0.0; action_dim]);
    }

    /// The last `len` steps as a single-row batch.
    pub fn window(&self, len: usize) -> TrajectoryBatch {
        let n = self.len();
        let len = len.min(n);
        let start = n - len;
        let state_dim = self.states.first().map_or(0, Vec::len);
        let action_dim = self.actions.first().map_or(0, Vec::len);
        let mut b = TrajectoryBatch::empty(state_dim, action_dim);
        b.batch = 1;
        b.len = len;
        for t in start..n {
            b.returns_to_go.push(self.returns_to_go[t]);
            b.states.extend_from_slice(&self.states[t]);
            b.actions.extend_from_slice(&self.actions[t]);
            b.next_states.extend(std::iter::repeat_n(0.0, state_dim));
            b.return_bin_labels.push(0);
        }
        b
    }
}

/// Anything that can score a history by its estimated achievable return.
pub trait ReturnEstimator {
    fn estimate_return(&self, history: &TrajectoryBatch) -> Result<f64>;
}

impl ReturnEstimator for ToyEdtModel {
    /// Expectile-head output at the newest state token.
    fn estimate_return(&self, history: &TrajectoryBatch) -> Result<f64> {
        let p = self.predict(history)?;
        Ok(*p.returns.last().expect("non-empty history"))
    }
}

/// Picks the history length whose truncated window gets the highest
/// return estimate. Ties go to the shorter length.
pub fn select_history_length<E: ReturnEstimator + ?Sized>(
    estimator: &E,
    history: &History,
    candidates: &[usize],
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    if history.is_empty() {
        return Err(Error::InsufficientSamples("empty history".into()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<(usize, f64)> = None;
    for &k in &sorted {
        let est = estimator.estimate_return(&history.window(k))?;
        if best.is_none_or(|(_, b)| est > b) {
            best = Some((k, est));
        }
    }
    Ok(best.expect("non-empty").0)
}

/// Outcome of one evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub embeddings: EmbeddingSet,
    pub episode_return: f64,
    pub history_lengths: Vec<usize>,
}

/// Runs the model greedily in `spec` for at most `max_steps` steps,
/// recording the state-token embedding of every step.
pub fn rollout(model: &ToyEdtModel, spec: &SyntheticEnvSpec, repetition: u32, max_steps: usize) -> Result<Rollout> {
    spec.validate()?;
    let cfg = &model.config;
    if spec.state_dim != cfg.state_dim || spec.action_dim != cfg.action_dim {
        return Err(Error::Shape("environment and model dimensions differ".into()));
    }
    let steps = spec.episode_length.min(max_steps);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (0xe7a1_0000 + u64::from(repetition)));
    let mut state = spec.initial_state(&mut rng);
    let mut rtg = cfg.eval_target_return;
    let mut history = History::default();
    let mut rows = Vec::with_capacity(steps * cfg.embed_dim);
    let mut lengths = Vec::with_capacity(steps);
    let mut total = 0.0;
    let candidates: Vec<usize> = if cfg.history_candidates.is_empty() {
        vec![cfg.context_length]
    } else {
        cfg.history_candidates.clone()
    };
    for _ in 0..steps {
        history.push(rtg, state.clone(), cfg.action_dim);
        let k = select_history_length(model, &history, &candidates)?;
        let window = history.window(k);
        let pred = model.predict(&window)?;
        let last = window.len - 1;
        rows.extend_from_slice(pred.state_embeddings.row(last));
        let action = pred.actions.row(last).to_vec();
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NumericalDivergence("non-finite action during rollout".into()));
        }
        let reward = spec.reward(&state, &action);
        total += reward;
        rtg -= reward;
        *history.actions.last_mut().expect("pushed") = action.clone();
        state = spec.step(&state, &action, &mut rng);
        lengths.push(k.min(history.len()));
    }
    let meta = Provenance {
        environment: spec.name.clone(),
        model_variant: cfg.variant.as_str().to_string(),
        dataset: spec.dataset.clone(),
        seed: cfg.seed,
        repetition,
    };
    Ok(Rollout {
        embeddings: EmbeddingSet::new(steps, cfg.embed_dim, rows, meta)?,
        episode_return: total,
        history_lengths: lengths,
    })
}

/// One rollout per repetition.
pub fn collect_rollouts(model: &ToyEdtModel, spec: &SyntheticEnvSpec, repetitions: usize, max_steps: usize) -> Result<Vec<Rollout>> {
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    (0..repetitions).map(|r| rollout(model, spec, r as u32, max_steps)).collect()
}

/// Per-step state-token embeddings from `repetitions` episodes.
pub fn collect_embeddings(model: &ToyEdtModel, spec: &SyntheticEnvSpec, repetitions: usize, max_steps: usize) -> Result<Vec<EmbeddingSet>> {
    Ok(collect_rollouts(model, spec, repetitions, max_steps)?
        .into_iter()
        .map(|r| r.embeddings)
        .collect())
}
