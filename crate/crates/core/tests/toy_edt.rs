use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rndedt_core::edt::{
    collect_embeddings, collect_rollouts, generate_dataset, gradient_check, select_history_length, History,
    LossWeights, OptimizerConfig, ReturnEstimator, SyntheticDataset, SyntheticEnvSpec, ToyEdtConfig, ToyEdtModel,
    Trainer, TrajectoryBatch,
};
use rndedt_core::nn::Parameters;
use rndedt_core::{Error, ModelVariant, Result};

fn small_env(seed: u64) -> (SyntheticEnvSpec, SyntheticDataset) {
    let spec = SyntheticEnvSpec::random("toy", "medium", 3, 2, seed).unwrap();
    let data = generate_dataset(&spec, 8, 5).unwrap();
    (spec, data)
}

fn small_config(variant: ModelVariant, seed: u64, data: &SyntheticDataset) -> ToyEdtConfig {
    let mut c = ToyEdtConfig::new(3, 2, variant).with_embed_dim(16).with_rnd_shape(3, 32);
    c.context_length = 5;
    c.return_bins = 5;
    c.history_candidates = vec![1, 3, 5];
    c.return_scale = data.max_abs_return_to_go();
    c.seed = seed;
    c
}

fn batch(data: &SyntheticDataset, size: usize, len: usize, seed: u64) -> TrajectoryBatch {
    data.sample_batch(size, len, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn sil_keeps_intrinsic_gradient_out_of_attention_blocks() {
    let only_int = LossWeights::only(|w| w.intrinsic = 1.0);
    for seed in 0..5 {
        let (_, data) = small_env(seed);
        let b = batch(&data, 4, 5, seed);
        let sil = ToyEdtModel::new(small_config(ModelVariant::Sil, seed, &data)).unwrap();
        let (loss, grads) = sil.loss_and_grad(&b, &only_int).unwrap();
        assert!(loss.intrinsic > 0.0);
        let block_grads: Vec<_> =
            grads.named_params().into_iter().filter(|(n, _)| n.starts_with("blocks.")).collect();
        assert!(!block_grads.is_empty());
        for (name, g) in &block_grads {
            assert!(g.iter().all(|v| *v == 0.0), "seed {seed}: {name} has a nonzero gradient");
        }
        let embed = grads.named_params().into_iter().find(|(n, _)| n == "embed_state.weight").unwrap().1.to_vec();
        assert!(embed.iter().any(|v| *v != 0.0));

        let til = ToyEdtModel::new(small_config(ModelVariant::Til, seed, &data)).unwrap();
        let (_, grads) = til.loss_and_grad(&b, &only_int).unwrap();
        let largest = grads
            .named_params()
            .into_iter()
            .filter(|(n, _)| n.starts_with("blocks."))
            .flat_map(|(_, g)| g.to_vec())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(largest > 1e-8, "seed {seed}: TIL block gradient {largest}");
    }
}

#[test]
fn baseline_has_no_intrinsic_term() {
    let (_, data) = small_env(0);
    let m = ToyEdtModel::new(small_config(ModelVariant::Baseline, 0, &data)).unwrap();
    let (l, g) = m.loss_and_grad(&batch(&data, 3, 5, 0), &LossWeights::default()).unwrap();
    assert_eq!(l.intrinsic, 0.0);
    assert!(g.predictor.is_none());
    assert!(m.rnd.is_none());
}

#[test]
fn outputs_never_see_the_future() {
    let (_, data) = small_env(2);
    let m = ToyEdtModel::new(small_config(ModelVariant::Til, 2, &data)).unwrap();
    let b = batch(&data, 2, 5, 7);
    let base = m.predict(&b).unwrap();
    let (s, a) = (b.state_dim, b.action_dim);
    for t in 1..5 {
        let mut later = b.clone();
        for sample in 0..2 {
            let step = sample * 5 + t;
            later.returns_to_go[step] += 3.0;
            later.states[step * s..(step + 1) * s].iter_mut().for_each(|v| *v -= 2.0);
            later.actions[step * a..(step + 1) * a].iter_mut().for_each(|v| *v += 1.5);
        }
        let p = m.predict(&later).unwrap();
        for sample in 0..2 {
            for u in 0..t {
                let row = sample * 5 + u;
                assert_eq!(p.actions.row(row), base.actions.row(row), "t={t} u={u}");
                assert_eq!(p.next_states.row(row), base.next_states.row(row));
                assert_eq!(p.returns[row], base.returns[row]);
            }
        }
    }
    // the action at step t is not visible to the action prediction at step t
    let mut own = b.clone();
    own.actions[3 * a] += 5.0;
    let p = m.predict(&own).unwrap();
    assert_eq!(p.actions.row(3), base.actions.row(3));
    assert_ne!(p.next_states.row(3), base.next_states.row(3));
}

#[test]
fn attention_rows_are_causal_distributions() {
    let (_, data) = small_env(3);
    let m = ToyEdtModel::new(small_config(ModelVariant::Baseline, 3, &data)).unwrap();
    let b = batch(&data, 2, 5, 1);
    let out = m.transformer_forward(&m.embed_tokens(&b).unwrap()).unwrap();
    for block in 0..m.config.num_attention_blocks {
        let probs = out.attention(block);
        assert_eq!(probs.len(), 2 * m.config.num_heads);
        for p in probs {
            for i in 0..p.rows {
                let row = p.row(i);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row[i + 1..].iter().all(|v| *v == 0.0));
                assert!(row[..=i].iter().all(|v| *v > 0.0));
            }
        }
    }
}

#[test]
fn weighted_components_recombine() {
    let (_, data) = small_env(4);
    let m = ToyEdtModel::new(small_config(ModelVariant::Sil, 4, &data)).unwrap();
    let b = batch(&data, 3, 5, 2);
    let full = m.loss_and_grad(&b, &LossWeights::default()).unwrap().0;
    type Pick = fn(&mut LossWeights);
    let picks: [(Pick, fn(&rndedt_core::edt::LossComponents) -> f64); 5] = [
        (|w| w.action = 1.0, |c| c.action),
        (|w| w.state = 1.0, |c| c.state),
        (|w| w.expectile = 1.0, |c| c.expectile),
        (|w| w.ret = 1.0, |c| c.ret),
        (|w| w.intrinsic = 1.0, |c| c.intrinsic),
    ];
    for (pick, field) in picks {
        let alone = m.loss_and_grad(&b, &LossWeights::only(pick)).unwrap().0;
        assert_eq!(alone.total, field(&full));
    }
    let w = LossWeights::default();
    let by_hand = full.action + 0.1 * full.state + full.expectile + 0.001 * full.ret + full.intrinsic;
    assert!((full.total - by_hand).abs() < 1e-15);
    assert_eq!(w, m.config.loss_weights);
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let (_, data) = small_env(5);
    let b = batch(&data, 3, 5, 3);
    for variant in ModelVariant::ALL {
        let m = ToyEdtModel::new(small_config(variant, 5, &data)).unwrap();
        assert!(m.num_trainable() <= 20_000);
        let r = gradient_check(&m, &b, &m.config.loss_weights, 17).unwrap();
        assert!(r.max_rel_error < 1e-4, "{variant}: {r:?}");
    }
    let mut linear = small_config(ModelVariant::Baseline, 5, &data);
    linear.num_attention_blocks = 0;
    let m = ToyEdtModel::new(linear).unwrap();
    let r = gradient_check(&m, &b, &m.config.loss_weights, 17).unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn short_training_run_is_deterministic_and_descends() {
    let mut spec = SyntheticEnvSpec::random("toy", "medium", 3, 2, 1).unwrap();
    spec.policy_noise = 0.05;
    spec.process_noise = 0.05;
    let data = generate_dataset(&spec, 16, 5).unwrap();
    let run = || {
        let m = ToyEdtModel::new(small_config(ModelVariant::Sil, 9, &data)).unwrap();
        let mut t = Trainer::new(m, OptimizerConfig { learning_rate: 1e-3, ..Default::default() }, 8);
        t.run(&data, 60).unwrap().iter().map(|r| r.loss.total).collect::<Vec<_>>()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(a[59] < a[0]);
}

#[test]
fn train_step_rejects_divergence() {
    let (_, mut data) = small_env(6);
    let m = ToyEdtModel::new(small_config(ModelVariant::Baseline, 6, &data)).unwrap();
    for e in &mut data.episodes {
        e.returns_to_go.iter_mut().for_each(|r| *r = 1e300);
    }
    let before = m.clone();
    let mut t = Trainer::new(m, OptimizerConfig::default(), 4);
    assert!(matches!(t.step(&data), Err(Error::NumericalDivergence(_))));
    assert_eq!(t.model, before);

    let mut b = batch(&data, 2, 5, 0);
    b.states[0] = f64::NAN;
    assert!(matches!(before.total_loss(&b), Err(Error::InvalidData(_))));
}

#[test]
fn overlong_windows_are_rejected() {
    let (_, data) = small_env(0);
    let m = ToyEdtModel::new(small_config(ModelVariant::Baseline, 0, &data)).unwrap();
    let long = SyntheticEnvSpec::random("toy", "medium", 3, 2, 0).unwrap();
    let long_data = generate_dataset(&long, 2, 5).unwrap();
    let b = batch(&long_data, 1, 6, 0);
    assert!(matches!(m.predict(&b), Err(Error::ContextOverflow { len: 18, max: 15 })));
}

struct PreferLength(Vec<(usize, f64)>);

impl ReturnEstimator for PreferLength {
    fn estimate_return(&self, history: &TrajectoryBatch) -> Result<f64> {
        Ok(self.0.iter().find(|(k, _)| *k == history.len).map_or(0.0, |(_, v)| *v))
    }
}

fn history(steps: usize) -> History {
    let mut h = History::default();
    for t in 0..steps {
        h.push(t as f64, vec![t as f64; 2], 1);
    }
    h
}

#[test]
fn history_length_selection() {
    let h = history(20);
    let est = PreferLength(vec![(1, 0.1), (5, 0.9), (10, 0.4), (20, 0.2)]);
    assert_eq!(select_history_length(&est, &h, &[1, 5, 10, 20]).unwrap(), 5);
    let tie = PreferLength(vec![(1, 0.3), (5, 0.7), (10, 0.7), (20, 0.1)]);
    assert_eq!(select_history_length(&tie, &h, &[20, 10, 5, 1]).unwrap(), 5);
    assert!(matches!(select_history_length(&est, &h, &[]), Err(Error::NoCandidates)));
    assert_eq!(h.window(5).len, 5);
    assert_eq!(h.window(5).returns_to_go, vec![15.0, 16.0, 17.0, 18.0, 19.0]);
}

#[test]
fn rollouts_collect_one_embedding_per_step() {
    let (mut spec, data) = small_env(7);
    spec.episode_length = 12;
    let model = ToyEdtModel::new(small_config(ModelVariant::Til, 7, &data)).unwrap();
    let sets = collect_embeddings(&model, &spec, 3, 1000).unwrap();
    assert_eq!(sets.len(), 3);
    for (rep, s) in sets.iter().enumerate() {
        assert_eq!((s.rows(), s.dim()), (12, 16));
        assert_eq!(s.meta.repetition, rep as u32);
        assert_eq!(s.meta.model_variant, "TIL");
        assert_eq!(s.meta.environment, "toy");
    }
    assert_ne!(sets[0].data(), sets[1].data());
    assert_eq!(collect_embeddings(&model, &spec, 3, 1000).unwrap(), sets);
    assert_eq!(collect_embeddings(&model, &spec, 1, 4).unwrap()[0].rows(), 4);
    assert!(collect_embeddings(&model, &spec, 0, 10).is_err());
}

/// Each collected row must equal the state embedding plus the positional
/// row of the last slot in the window chosen at that step.
#[test]
fn collected_rows_match_direct_embedding() {
    let (mut spec, data) = small_env(8);
    spec.episode_length = 9;
    let model = ToyEdtModel::new(small_config(ModelVariant::Sil, 8, &data)).unwrap();
    let rollout = &collect_rollouts(&model, &spec, 1, 1000).unwrap()[0];

    // replay the same episode to recover the visited states
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xe7a1_0000);
    let mut state = spec.initial_state(&mut rng);
    let mut rtg = model.config.eval_target_return;
    let mut h = History::default();
    let net = &model.net;
    for t in 0..9 {
        h.push(rtg, state.clone(), 2);
        let k = rollout.history_lengths[t];
        let w = &net.embed_state.weight;
        let want: Vec<f64> = (0..16)
            .map(|j| {
                (0..3).map(|i| state[i] * w.get(i, j)).sum::<f64>()
                    + net.embed_state.bias[j]
                    + net.position.get(k - 1, j)
            })
            .collect();
        let got = rollout.embeddings.row(t);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "step {t}");
        }
        let p = model.predict(&h.window(k)).unwrap();
        let action = p.actions.row(k - 1).to_vec();
        let r = spec.reward(&state, &action);
        rtg -= r;
        *h.actions.last_mut().unwrap() = action.clone();
        state = spec.step(&state, &action, &mut rng);
    }
}
