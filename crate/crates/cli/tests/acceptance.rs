//! Acceptance harness: one PASS/FAIL line per primary criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines come out in a
//! fixed order and each criterion can be timed against its budget.

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rndedt_cli::cmd_correlate;
use rndedt_cli::fixtures::{medium_embeddings, score_row, strongest_correlations};
use rndedt_core::edt::{
    generate_dataset, gradient_check, LossWeights, OptimizerConfig, SyntheticDataset, SyntheticEnvSpec, ToyEdtConfig,
    ToyEdtModel, Trainer,
};
use rndedt_core::io::{
    load_model, parse_results, read_embedding_dump, results_to_string, rnd_target_hash, save_model,
    stored_target_hash, write_embedding_dump,
};
use rndedt_core::nn::Parameters;
use rndedt_core::rnd::rnd_gain;
use rndedt_core::stats::{cumulative_hns, one_way_anova};
use rndedt_core::{
    cosine_similarity_mean, covariance_trace, l2_norm_mean, orthogonal_init, EmbeddingSet, Error, Matrix,
    ModelVariant, Provenance, RndConfig, RndPair,
};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn run(name: &str, budget: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = f();
    let took = start.elapsed();
    let (pass, detail) = match outcome {
        Ok(d) if took <= budget => (true, d),
        Ok(d) => (false, format!("{d}; took {took:.1?}, budget {budget:?}")),
        Err(e) => (false, e),
    };
    println!("{} {name} [{took:.2?}] {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

// ---- correlation regression ----

fn reported_correlations() -> Check {
    let got = cmd_correlate(&medium_embeddings()).map_err(|e| e.to_string())?;
    let mut coeff_ok = true;
    let mut selection = Vec::new();
    let mut notes = Vec::new();
    for (env, metric, r) in strongest_correlations() {
        let c = got.iter().find(|c| c.environment == env).ok_or(format!("{env} missing"))?;
        let mine = c.all.iter().find(|x| x.metric == metric).expect("three metrics");
        if (mine.r - r).abs() > 0.005 {
            coeff_ok = false;
        }
        notes.push(format!("{env} {metric} r={:+.4} (reported {r:+.3})", mine.r));
        if c.best.metric != metric {
            selection.push(format!("{env}: largest |r| is {} ({:+.3}), reported {metric}", c.best.metric, c.best.r));
        }
    }
    ensure!(coeff_ok, "coefficients off: {}", notes.join("; "));
    ensure!(
        selection.is_empty(),
        "coefficients within 0.005 but strongest-metric selection differs: {}",
        selection.join("; ")
    );
    Ok(notes.join("; "))
}

// ---- metric oracles ----

fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingSet {
    let offset: f64 = rng.random_range(-5.0..5.0);
    let scale: f64 = rng.random_range(0.1..10.0);
    let data = (0..n * d).map(|_| offset + scale * rng.random_range(-1.0..1.0)).collect();
    EmbeddingSet::new(n, d, data, Provenance::default()).expect("finite")
}

fn pairwise_cov_trace(e: &EmbeddingSet) -> f64 {
    let n = e.rows();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += e.row(i).iter().zip(e.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    total / (n * (n - 1)) as f64
}

fn two_pass_cov_trace(e: &EmbeddingSet) -> f64 {
    let (n, d) = (e.rows(), e.dim());
    (0..d)
        .map(|k| {
            let mean = (0..n).map(|i| e.row(i)[k]).sum::<f64>() / n as f64;
            (0..n).map(|i| (e.row(i)[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        })
        .sum()
}

fn norm(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn all_pairs_cosine(e: &EmbeddingSet) -> f64 {
    let n = e.rows();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (e.row(i), e.row(j));
            total += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b));
        }
    }
    total / (n * (n - 1) / 2) as f64
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = [0.0f64; 4];
    for case in 0..50 {
        let n = if case % 10 == 0 { 1000 } else { rng.random_range(2..=400) };
        let d = rng.random_range(1..=64);
        let e = random_set(&mut rng, n, d);
        let cov = covariance_trace(&e).map_err(|x| x.to_string())?;
        let errs = [
            rel(cov, pairwise_cov_trace(&e)),
            rel(cov, two_pass_cov_trace(&e)),
            rel(l2_norm_mean(&e).unwrap(), e.iter_rows().map(norm).sum::<f64>() / n as f64),
            (cosine_similarity_mean(&e).unwrap() - all_pairs_cosine(&e)).abs(),
        ];
        for (w, x) in worst.iter_mut().zip(errs) {
            *w = w.max(x);
        }
    }
    ensure!(worst.iter().all(|w| *w < 1e-9), "worst errors {worst:?}");
    Ok(format!(
        "50 matrices; worst cov vs pairwise {:.1e}, vs two-pass {:.1e}, l2 {:.1e}, cosine abs {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn metric_invariances() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    while checked < 20 {
        let n = rng.random_range(2..40);
        let d = rng.random_range(1..12);
        let data: Vec<f64> = (0..n * d).map(|_| rng.random_range(-100.0..100.0)).collect();
        if data.chunks(d).any(|r| norm(r) < 1e-3) {
            continue;
        }
        checked += 1;
        let set = |v: Vec<f64>| EmbeddingSet::new(n, d, v, Provenance::default()).unwrap();
        let base = set(data.clone());
        let (cov, l2, cos) = (
            covariance_trace(&base).unwrap(),
            l2_norm_mean(&base).unwrap(),
            cosine_similarity_mean(&base).unwrap(),
        );

        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-1e3..1e3)).collect();
        let moved = set(data.iter().enumerate().map(|(i, x)| x + shift[i % d]).collect());
        let dc = (covariance_trace(&moved).unwrap() - cov).abs();
        ensure!(dc <= 1e-9 * (1.0 + cov), "instance {checked}: translation moved cov_trace by {dc:e}");

        let c: f64 = rng.random_range(1e-3..1e3);
        let scaled = set(data.iter().map(|x| c * x).collect());
        let ds = (cosine_similarity_mean(&scaled).unwrap() - cos).abs();
        ensure!(ds < 1e-12, "instance {checked}: scaling moved cosine by {ds:e}");

        let k: f64 = rng.random_range(-1e3..1e3);
        let hom = set(data.iter().map(|x| k * x).collect());
        let dh = (l2_norm_mean(&hom).unwrap() - k.abs() * l2).abs();
        ensure!(dh <= 1e-12 * (1.0 + k.abs() * l2), "instance {checked}: l2 homogeneity off by {dh:e}");

        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let perm = set(order.iter().flat_map(|&i| data[i * d..(i + 1) * d].to_vec()).collect());
        ensure!(
            (covariance_trace(&perm).unwrap() - cov).abs() <= 1e-12 * (1.0 + cov)
                && (l2_norm_mean(&perm).unwrap() - l2).abs() <= 1e-12 * (1.0 + l2)
                && (cosine_similarity_mean(&perm).unwrap() - cos).abs() < 1e-12,
            "instance {checked}: row permutation changed a metric"
        );
    }
    Ok("20 instances: translation 1e-9·(1+v), cosine scale 1e-12, l2 homogeneity 1e-12, permutation 1e-12".into())
}

// ---- RND ----

fn random_input(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect())
}

fn rnd_contracts() -> Check {
    // (a) orthogonality on the shorter side, ∞-norm as maximum absolute row sum
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_a: f64 = 0.0;
    for _ in 0..20 {
        let (rows, cols) = (rng.random_range(1..=96), rng.random_range(1..=96));
        let w = orthogonal_init(rows, cols, rnd_gain(), &mut rng).map_err(|e| e.to_string())?;
        let g = if rows <= cols { w.matmul_t(&w) } else { w.t_matmul(&w) };
        for i in 0..g.rows {
            let row: f64 = (0..g.cols).map(|j| (g.get(i, j) - if i == j { 2.0 } else { 0.0 }).abs()).sum();
            worst_a = worst_a.max(row);
        }
    }
    ensure!(worst_a < 1e-5, "(a) ‖WWᵀ − 2I‖∞ = {worst_a:e}");

    // (b) predictor equal to a depth-1 target
    let cfg = RndConfig { predictor_depth: 1, hidden_width: 64, input_dim: 12 };
    let pair = RndPair::new(cfg, &mut rng).map_err(|e| e.to_string())?;
    let twin = RndPair::from_parts(cfg, pair.target().clone(), pair.target().clone()).map_err(|e| e.to_string())?;
    let loss_b = twin.intrinsic_loss(&random_input(&mut rng, 30, 12)).map_err(|e| e.to_string())?;
    ensure!(loss_b == 0.0, "(b) duplicated target loss {loss_b:e}");

    // (c) frozen target through 100 training steps and a checkpoint
    let mut spec = SyntheticEnvSpec::random("toy", "medium", 3, 2, 6).map_err(|e| e.to_string())?;
    spec.episode_length = 20;
    let data = generate_dataset(&spec, 8, 5).map_err(|e| e.to_string())?;
    let mut c = ToyEdtConfig::new(3, 2, ModelVariant::Til).with_embed_dim(16).with_rnd_shape(3, 64);
    c.context_length = 5;
    c.return_bins = 5;
    c.history_candidates = vec![1, 5];
    c.return_scale = data.max_abs_return_to_go();
    let model = ToyEdtModel::new(c).map_err(|e| e.to_string())?;
    let before = rnd_target_hash(model.rnd.as_ref().expect("TIL has RND"));
    let mut t = Trainer::new(model, OptimizerConfig { learning_rate: 1e-3, ..Default::default() }, 8);
    t.run(&data, 100).map_err(|e| e.to_string())?;
    let after = rnd_target_hash(t.model.rnd.as_ref().expect("TIL has RND"));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("til.ckpt");
    save_model(&t.model, &path).map_err(|e| e.to_string())?;
    let stored = stored_target_hash(&path).map_err(|e| e.to_string())?;
    ensure!(before == after && stored == Some(before), "(c) target hash changed");

    // (d) predictor gradients against central differences
    let cfg = RndConfig { predictor_depth: 3, hidden_width: 16, input_dim: 8 };
    let pair = RndPair::new(cfg, &mut rng).map_err(|e| e.to_string())?;
    let x = random_input(&mut rng, 10, 8);
    let grads = pair.predictor_gradients(&x).map_err(|e| e.to_string())?;
    let h = 1e-6;
    let mut worst_d: f64 = 0.0;
    for (t, (_, g)) in grads.named_params().iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let mut p = pair.clone();
            let orig = p.predictor.named_params()[t].1[i];
            p.predictor.named_params_mut()[t].1[i] = orig + h;
            let plus = p.intrinsic_loss(&x).unwrap();
            p.predictor.named_params_mut()[t].1[i] = orig - h;
            let minus = p.intrinsic_loss(&x).unwrap();
            let n = (plus - minus) / (2.0 * h);
            worst_d = worst_d.max((a - n).abs() / a.abs().max(n.abs()).max(1e-7));
        }
    }
    ensure!(worst_d < 1e-4, "(d) worst relative gradient error {worst_d:e}");
    Ok(format!(
        "(a) worst {worst_a:.1e} over 20 shapes; (b) loss 0; (c) hash {} unchanged; (d) worst rel {worst_d:.1e}",
        &rndedt_core::io::hex(&before)[..12]
    ))
}

// ---- toy EDT ----

fn small_data(seed: u64) -> SyntheticDataset {
    let spec = SyntheticEnvSpec::random("toy", "medium", 3, 2, seed).expect("stable");
    generate_dataset(&spec, 8, 5).expect("dataset")
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

fn routing() -> Check {
    let only_int = LossWeights::only(|w| w.intrinsic = 1.0);
    let mut smallest_til = f64::INFINITY;
    for seed in 0..5 {
        let data = small_data(seed);
        let b = data.sample_batch(4, 5, &mut ChaCha8Rng::seed_from_u64(seed));
        let sil = ToyEdtModel::new(small_config(ModelVariant::Sil, seed, &data)).map_err(|e| e.to_string())?;
        let (_, g) = sil.loss_and_grad(&b, &only_int).map_err(|e| e.to_string())?;
        let blocks: Vec<_> = g.named_params().into_iter().filter(|(n, _)| n.starts_with("blocks.")).collect();
        ensure!(!blocks.is_empty(), "no attention-block parameters");
        for (name, v) in &blocks {
            ensure!(v.iter().all(|x| *x == 0.0), "seed {seed}: SIL gradient on {name} is nonzero");
        }
        let til = ToyEdtModel::new(small_config(ModelVariant::Til, seed, &data)).map_err(|e| e.to_string())?;
        let (_, g) = til.loss_and_grad(&b, &only_int).map_err(|e| e.to_string())?;
        let largest = g
            .named_params()
            .into_iter()
            .filter(|(n, _)| n.starts_with("blocks."))
            .flat_map(|(_, v)| v.to_vec())
            .fold(0.0f64, |m, x| m.max(x.abs()));
        ensure!(largest > 1e-8, "seed {seed}: largest TIL block gradient {largest:e}");
        smallest_til = smallest_til.min(largest);
    }
    Ok(format!("5 seeds; SIL block gradients exactly 0; TIL max |grad| ≥ {smallest_til:.2e}"))
}

fn gradient_checks() -> Check {
    let data = small_data(5);
    let b = data.sample_batch(3, 5, &mut ChaCha8Rng::seed_from_u64(3));
    let mut parts = Vec::new();
    for v in ModelVariant::ALL {
        let m = ToyEdtModel::new(small_config(v, 5, &data)).map_err(|e| e.to_string())?;
        let params = m.num_trainable();
        ensure!(params <= 20_000, "{v}: {params} parameters");
        let r = gradient_check(&m, &b, &m.config.loss_weights, 17).map_err(|e| e.to_string())?;
        ensure!(r.max_rel_error < 1e-4, "{v}: {r:?}");
        parts.push(format!("{v} {params} params, {} entries, worst {:.1e}", r.checked, r.max_rel_error));
    }
    Ok(parts.join("; "))
}

fn sanity_data() -> SyntheticDataset {
    let mut spec = SyntheticEnvSpec::random("toy", "medium", 3, 2, 1).expect("stable");
    spec.policy_noise = 0.05;
    spec.process_noise = 0.05;
    generate_dataset(&spec, 32, 21).expect("dataset")
}

/// Held-out loss before and after 200 steps, plus the per-step trajectory.
fn sanity_run(variant: ModelVariant, seed: u64, data: &SyntheticDataset) -> Result<(f64, f64, Vec<f64>), String> {
    let mut c = ToyEdtConfig::new(3, 2, variant);
    c.return_scale = data.max_abs_return_to_go();
    c.seed = seed;
    let probe = data.sample_batch(64, 20, &mut ChaCha8Rng::seed_from_u64(777));
    let model = ToyEdtModel::new(c).map_err(|e| e.to_string())?;
    let before = model.total_loss(&probe).map_err(|e| e.to_string())?.total;
    let mut t = Trainer::new(model, OptimizerConfig { learning_rate: 1e-3, ..Default::default() }, 16);
    let traj: Vec<f64> = t.run(data, 200).map_err(|e| e.to_string())?.iter().map(|r| r.loss.total).collect();
    let after = t.model.total_loss(&probe).map_err(|e| e.to_string())?.total;
    Ok((before, after, traj))
}

fn training_sanity(variant: ModelVariant) -> Check {
    let data = sanity_data();
    let mut ratios = Vec::new();
    let mut first = None;
    for seed in 0..3 {
        let (before, after, traj) = sanity_run(variant, seed, &data)?;
        let ratio = after / before;
        ensure!(ratio <= 0.5, "seed {seed}: held-out loss {before:.4} -> {after:.4} (ratio {ratio:.3})");
        ratios.push(format!("{ratio:.3}"));
        if seed == 0 {
            first = Some(traj);
        }
    }
    let (_, _, again) = sanity_run(variant, 0, &data)?;
    let same = first.as_ref().is_some_and(|a| a.iter().zip(&again).all(|(x, y)| x.to_bits() == y.to_bits()));
    ensure!(same, "rerun at seed 0 produced a different loss trajectory");
    Ok(format!("{variant}: loss ratios {} over seeds 0-2; rerun bit-identical", ratios.join(", ")))
}

// ---- statistics ----

fn anova() -> Check {
    let a = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![6.0, 7.0, 8.0]]).map_err(|e| e.to_string())?;
    ensure!((a.f_statistic - 21.0).abs() < 1e-9, "F = {}", a.f_statistic);
    ensure!((a.df_between, a.df_within) == (2, 6), "df = ({}, {})", a.df_between, a.df_within);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut p: Vec<f64> = (0..1000)
        .map(|_| {
            let groups: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..5).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect())
                .collect();
            one_way_anova(&groups).map(|a| a.p_value)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    let ks = p
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max);
    ensure!(ks < 0.05, "KS distance {ks:.4}");
    Ok(format!("F = {} with df (2, 6); null KS distance {ks:.4} over 1000 trials", a.f_statistic))
}

fn cumulative() -> Check {
    let total = cumulative_hns(&score_row("medium", ModelVariant::Baseline)).map_err(|e| e.to_string())?;
    ensure!((total - 257.13).abs() < 1e-9, "cumulative {total}");
    Ok(format!("medium EDT row sums to {total}"))
}

// ---- formats ----

fn formats() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);

    let data: Vec<f64> = (0..40 * 7).map(|_| rng.random_range(-3.0f32..3.0) as f64).collect();
    let set = EmbeddingSet::new(40, 7, data, Provenance { environment: "E".into(), ..Provenance::default() })
        .map_err(|e| e.to_string())?;
    let dump = dir.path().join("a.edte");
    write_embedding_dump(&set, &dump).map_err(|e| e.to_string())?;
    let back = read_embedding_dump(&dump).map_err(|e| e.to_string())?;
    ensure!(
        back.data().iter().zip(set.data()).all(|(a, b)| a.to_bits() == b.to_bits()) && back.meta == set.meta,
        "dump payload not bitwise identical"
    );
    let bytes = fs::read(&dump).map_err(|e| e.to_string())?;
    let probe = |b: &[u8]| {
        let p = dir.path().join("probe.edte");
        fs::write(&p, b).expect("temp write");
        read_embedding_dump(&p)
    };
    let mut bad = bytes.clone();
    bad[0] = b'X';
    ensure!(matches!(probe(&bad), Err(Error::BadMagic(_))), "dump: bad magic not detected");
    let mut bad = bytes.clone();
    bad[4] = 9;
    ensure!(matches!(probe(&bad), Err(Error::UnsupportedVersion(9))), "dump: version not detected");
    ensure!(matches!(probe(&bytes[..bytes.len() - 3]), Err(Error::LengthMismatch(_))), "dump: truncation not detected");

    let data_env = small_data(2);
    let model = ToyEdtModel::new(small_config(ModelVariant::Sil, 2, &data_env)).map_err(|e| e.to_string())?;
    let ckpt = dir.path().join("m.ckpt");
    save_model(&model, &ckpt).map_err(|e| e.to_string())?;
    let loaded = load_model(&ckpt).map_err(|e| e.to_string())?;
    let b = data_env.sample_batch(3, 5, &mut rng);
    let (p1, p2) = (model.predict(&b).unwrap(), loaded.predict(&b).unwrap());
    ensure!(
        p1.actions == p2.actions && p1.returns == p2.returns && p1.state_embeddings == p2.state_embeddings,
        "checkpoint forward outputs differ"
    );
    let cbytes = fs::read(&ckpt).map_err(|e| e.to_string())?;
    let probe = |b: &[u8]| {
        let p = dir.path().join("probe.ckpt");
        fs::write(&p, b).expect("temp write");
        load_model(&p)
    };
    ensure!(matches!(probe(&cbytes[..cbytes.len() - 5]), Err(Error::LengthMismatch(_))), "ckpt: truncation");
    let mut bad = cbytes.clone();
    bad[4] = 2;
    ensure!(matches!(probe(&bad), Err(Error::VersionMismatch { .. })), "ckpt: version");
    let mut bad = cbytes.clone();
    let n = bad.len();
    bad[n - 40] ^= 0x10;
    ensure!(matches!(probe(&bad), Err(Error::HashMismatch)), "ckpt: flipped target byte");

    let mut rows = medium_embeddings();
    for r in rows.iter_mut().skip(4) {
        r.performance_hns = rng.random_range(-1e6..1e6) * 10f64.powi(rng.random_range(-9..9));
        r.metrics.cov_trace = rng.random_range(0.0..1.0) / 7.0;
    }
    let text = results_to_string(&rows).map_err(|e| e.to_string())?;
    let back = parse_results(&text).map_err(|e| e.to_string())?;
    let nine = |x: f64| format!("{x:.8e}").parse::<f64>().expect("sci");
    ensure!(
        rows.iter().zip(&back).all(|(a, b)| nine(a.performance_hns) == b.performance_hns
            && nine(a.metrics.cov_trace) == b.metrics.cov_trace
            && nine(a.metrics.cosine_sim_mean) == b.metrics.cosine_sim_mean),
        "results table lost digits"
    );
    ensure!(
        matches!(parse_results("environment,model\n"), Err(Error::MalformedHeader(_))),
        "results: malformed header accepted"
    );
    let short_row = text.lines().take(2).collect::<Vec<_>>().join("\n").rsplit_once(',').map(|(h, _)| h.to_string());
    ensure!(
        matches!(parse_results(&short_row.unwrap_or_default()), Err(Error::Parse { row: 1, .. })),
        "results: missing column not reported at row 1"
    );
    Ok("dump and checkpoint bitwise; results at 9 digits; bad magic, version, length, hash, header and row errors raised".into())
}

fn main() -> ExitCode {
    let min = Duration::from_secs(60);
    let mut results = vec![
        run("table-correlations", Duration::from_secs(1), reported_correlations),
        run("metric-oracles", Duration::from_secs(30), metric_oracles),
        run("metric-invariances", 2 * min, metric_invariances),
        run("rnd-contracts", 2 * min, rnd_contracts),
        run("sil-til-routing", 2 * min, routing),
        run("full-loss-gradient-check", 2 * min, gradient_checks),
    ];
    let mut per_variant = BTreeMap::new();
    for v in ModelVariant::ALL {
        per_variant.insert(v, run(&format!("training-sanity-{v}"), 2 * min, || training_sanity(v)));
    }
    results.push(per_variant.values().all(|p| *p));
    results.push(run("anova", 2 * min, anova));
    results.push(run("format-round-trips", 2 * min, formats));
    results.push(run("cumulative-score", Duration::from_secs(1), cumulative));
    let passed = results.iter().filter(|p| **p).count();
    println!("{passed}/{} criteria passed (training sanity counts once across its three variants)", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
