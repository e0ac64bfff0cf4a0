use std::fs;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rndedt_core::edt::{generate_dataset, SyntheticEnvSpec, ToyEdtConfig, ToyEdtModel};
use rndedt_core::io::{
    encode_model, format_sig9, load_model, load_rnd, parse_results, read_embedding_dump, read_embedding_dump_full,
    read_results, results_to_string, save_model, save_rnd, write_embedding_dump, write_embedding_dump_with,
    write_results, DumpManifest,
};
use rndedt_core::{EmbeddingSet, Error, MetricRecord, ModelVariant, Provenance, RndConfig, RndPair, RunRecord};

fn provenance(rep: u32) -> Provenance {
    Provenance {
        environment: "Hopper".into(),
        model_variant: "SIL".into(),
        dataset: "medium".into(),
        seed: 4,
        repetition: rep,
    }
}

#[test]
fn dump_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<f64> = (0..37 * 9).map(|_| rng.random_range(-3.0f32..3.0) as f64).collect();
    let set = EmbeddingSet::new(37, 9, data, provenance(2)).unwrap();
    let path = dir.path().join("a.edte");
    write_embedding_dump(&set, &path).unwrap();
    let back = read_embedding_dump(&path).unwrap();
    assert_eq!(back.meta, set.meta);
    assert!(back.data().iter().zip(set.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    let bytes = fs::read(&path).unwrap();
    let manifest_len = u32::from_le_bytes(bytes[16 + 4 * 37 * 9..][..4].try_into().unwrap()) as usize;
    assert_eq!(bytes.len(), 16 + 4 * 37 * 9 + 4 + manifest_len);
}

#[test]
fn dump_manifest_extras_survive() {
    let dir = tempfile::tempdir().unwrap();
    let set = EmbeddingSet::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], provenance(0)).unwrap();
    let mut m = DumpManifest::for_set(&set);
    m.episode_return = Some(-12.5);
    m.performance_hns = Some(71.25);
    let path = dir.path().join("b.edte");
    write_embedding_dump_with(&set, &m, &path).unwrap();
    assert_eq!(read_embedding_dump_full(&path).unwrap().1, m);
}

#[test]
fn corrupted_dumps_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let set = EmbeddingSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], provenance(0)).unwrap();
    let path = dir.path().join("c.edte");
    write_embedding_dump(&set, &path).unwrap();
    let good = fs::read(&path).unwrap();
    let check = |bytes: &[u8]| {
        let p = dir.path().join("bad.edte");
        fs::write(&p, bytes).unwrap();
        read_embedding_dump(&p)
    };
    let mut b = good.clone();
    b[1] = b'X';
    assert!(matches!(check(&b), Err(Error::BadMagic(_))));
    let mut b = good.clone();
    b[4] = 7;
    assert!(matches!(check(&b), Err(Error::UnsupportedVersion(7))));
    assert!(matches!(check(&good[..20]), Err(Error::LengthMismatch(_))));
    let mut b = good.clone();
    b[8] = 200;
    assert!(matches!(check(&b), Err(Error::LengthMismatch(_))));
    let mut b = good;
    b[20..24].copy_from_slice(&f32::INFINITY.to_le_bytes());
    assert!(matches!(check(&b), Err(Error::InvalidData(_))));
}

fn reported_ant() -> Vec<RunRecord> {
    [
        (ModelVariant::Baseline, 88.84, 620.76, 24.92, 0.0288),
        (ModelVariant::Sil, 90.49, 526.00, 23.19, 0.0356),
        (ModelVariant::Til, 89.01, 572.99, 24.02, 0.0278),
    ]
    .into_iter()
    .map(|(v, p, c, l, s)| RunRecord {
        environment: "Ant".into(),
        model_variant: v,
        dataset: "medium".into(),
        seed: 0,
        performance_hns: p,
        metrics: MetricRecord { cov_trace: c, l2_norm_mean: l, cosine_sim_mean: s, repetitions_averaged: 1 },
    })
    .collect()
}

#[test]
fn results_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    let rows = reported_ant();
    write_results(&rows, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("environment,model,dataset,seed,performance,cov_trace,l2_norm,cosine_sim\n"));
    assert!(text.contains("Ant,baseline,medium,0,88.84,620.76,24.92,0.0288\n"));
    assert_eq!(read_results(&path).unwrap(), rows);
}

#[test]
fn results_parse_errors_name_the_row() {
    let header = "environment,model,dataset,seed,performance,cov_trace,l2_norm,cosine_sim";
    let bad = format!("{header}\nAnt,baseline,medium,0,1,2,3,4\nAnt,SIL,medium,0,1,2,x,4\n");
    match parse_results(&bad) {
        Err(Error::Parse { row, message }) => {
            assert_eq!(row, 2);
            assert!(message.contains("l2_norm"));
        }
        other => panic!("{other:?}"),
    }
    let unknown = format!("{header}\nAnt,PPO,medium,0,1,2,3,4\n");
    assert!(matches!(parse_results(&unknown), Err(Error::Parse { row: 1, .. })));
    let swapped = "environment,dataset,model,seed,performance,cov_trace,l2_norm,cosine_sim\n";
    assert!(matches!(parse_results(swapped), Err(Error::MalformedHeader(_))));
}

proptest! {
    #[test]
    fn results_keep_nine_significant_digits(vals in prop::collection::vec(-1e12f64..1e12, 4), scale in -12i32..12) {
        let f = 10f64.powi(scale);
        let row = RunRecord {
            environment: "E".into(),
            model_variant: ModelVariant::Til,
            dataset: "d".into(),
            seed: 3,
            performance_hns: vals[0] * f,
            metrics: MetricRecord {
                cov_trace: vals[1] * f,
                l2_norm_mean: vals[2] * f,
                cosine_sim_mean: vals[3] * f,
                repetitions_averaged: 1,
            },
        };
        let back = parse_results(&results_to_string(std::slice::from_ref(&row)).unwrap()).unwrap();
        let nine = |x: f64| format!("{x:.8e}").parse::<f64>().unwrap();
        prop_assert_eq!(back[0].performance_hns, nine(row.performance_hns));
        prop_assert_eq!(back[0].metrics.cov_trace, nine(row.metrics.cov_trace));
        prop_assert_eq!(back[0].metrics.l2_norm_mean, nine(row.metrics.l2_norm_mean));
        prop_assert_eq!(back[0].metrics.cosine_sim_mean, nine(row.metrics.cosine_sim_mean));
        prop_assert_eq!(format_sig9(back[0].performance_hns), format_sig9(row.performance_hns));
    }
}

fn small_model(variant: ModelVariant) -> (ToyEdtModel, rndedt_core::edt::TrajectoryBatch) {
    let spec = SyntheticEnvSpec::random("toy", "medium", 3, 2, 2).unwrap();
    let data = generate_dataset(&spec, 4, 5).unwrap();
    let mut c = ToyEdtConfig::new(3, 2, variant).with_embed_dim(8).with_rnd_shape(2, 16);
    c.context_length = 5;
    c.return_bins = 5;
    c.history_candidates = vec![1, 5];
    c.seed = 12;
    let batch = data.sample_batch(2, 5, &mut ChaCha8Rng::seed_from_u64(0));
    (ToyEdtModel::new(c).unwrap(), batch)
}

#[test]
fn checkpoint_reproduces_forward_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    for variant in ModelVariant::ALL {
        let (model, batch) = small_model(variant);
        let path = dir.path().join(format!("{variant}.ckpt"));
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model);
        let (a, b) = (model.predict(&batch).unwrap(), back.predict(&batch).unwrap());
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.returns, b.returns);
        assert_eq!(a.state_embeddings, b.state_embeddings);
        assert_eq!(encode_model(&back).unwrap(), fs::read(&path).unwrap());
    }
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = small_model(ModelVariant::Sil);
    let path = dir.path().join("m.ckpt");
    save_model(&model, &path).unwrap();
    let good = fs::read(&path).unwrap();
    let check = |bytes: &[u8]| {
        let p = dir.path().join("bad.ckpt");
        fs::write(&p, bytes).unwrap();
        load_model(&p)
    };
    assert!(matches!(check(&good[..good.len() - 9]), Err(Error::LengthMismatch(_))));
    let mut b = good.clone();
    b[4] = 9;
    assert!(matches!(check(&b), Err(Error::VersionMismatch { found: 9, expected: 1 })));
    // flip one bit inside the target section, just before the digest
    let mut b = good.clone();
    let n = b.len();
    b[n - 40] ^= 1;
    assert!(matches!(check(&b), Err(Error::HashMismatch)));

    // a checkpoint whose config disagrees with its tensors
    let mut other = model.clone();
    other.config.embed_dim = 12;
    other.config.rnd.as_mut().unwrap().input_dim = 12;
    let bytes = encode_model(&other).unwrap();
    assert!(matches!(check(&bytes), Err(Error::ShapeMismatch(_))));
}

#[test]
fn rnd_pair_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pair = RndPair::new(RndConfig { predictor_depth: 3, hidden_width: 24, input_dim: 6 }, &mut ChaCha8Rng::seed_from_u64(3))
        .unwrap();
    let path = dir.path().join("pair.ckpt");
    save_rnd(&pair, &path).unwrap();
    assert_eq!(load_rnd(&path).unwrap(), pair);
    assert!(matches!(load_model(&path), Err(Error::ShapeMismatch(_))));
}
