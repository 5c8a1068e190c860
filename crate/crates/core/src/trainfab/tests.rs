use super::*;
use crate::jepacore::ModelConfig;
use crate::tokenfab::TokenGridSpec;
use crate::worldsim::WorldConfig;

fn small_world() -> WorldConfig {
    WorldConfig {
        arena: 32,
        frames: 4,
        min_objects: 2,
        max_objects: 3,
        min_radius: 3.0,
        max_radius: 5.0,
        max_speed: 3.0,
        ..WorldConfig::default()
    }
}

fn small_grid() -> TokenGridSpec {
    TokenGridSpec {
        frames: 4,
        channels: 3,
        height: 32,
        width: 32,
        tubelet: 2,
        patch: 8,
    }
}

fn small_model() -> ModelConfig {
    ModelConfig {
        dim: 8,
        encoder_depth: 2,
        predictor_depth: 1,
        heads: 2,
        grid: small_grid(),
        ..ModelConfig::default()
    }
}

fn small_set(n: usize) -> TrainSet {
    TrainSet::generate(&small_world(), &small_grid(), &NormConstants::default(), n, 100, 1).unwrap()
}

fn state64() -> Checkpoint<f64> {
    Checkpoint::new(JepaModel::init(&small_model(), 5).unwrap(), &NormConstants::default(), "test")
}

fn stage(strategy: MaskStrategy, steps: usize) -> StageConfig {
    StageConfig {
        strategy,
        steps,
        batch: 3,
        precision: Precision::F64,
        seed: 9,
        optim: AdamWConfig {
            lr: 1e-3,
            ..AdamWConfig::default()
        },
        ..StageConfig::default()
    }
}

#[test]
fn zero_step_stage_is_identity() {
    let data = small_set(6);
    let mut st = state64();
    let before = encode_checkpoint(&st).unwrap();
    let log = run_stage(&stage(MaskStrategy::Patch, 0), &mut st, &data).unwrap();
    assert!(log.losses.is_empty());
    assert_eq!(before, encode_checkpoint(&st).unwrap());
}

#[test]
fn repeated_runs_share_loss_trajectories() {
    let data = small_set(6);
    for strategy in [MaskStrategy::Patch, MaskStrategy::Object, MaskStrategy::Ia] {
        let run = || {
            let mut st = state64();
            run_stage(&stage(strategy, 10), &mut st, &data).unwrap().losses
        };
        let (a, b) = (run(), run());
        assert_eq!(a.len(), 10);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn batches_cover_each_epoch_once() {
    let cfg = StageConfig {
        batch: 4,
        ..StageConfig::default()
    };
    let mut seen: Vec<usize> = (0..3).flat_map(|s| cfg.batch_indices(s, 12)).collect();
    seen.sort();
    assert_eq!(seen, (0..12).collect::<Vec<_>>());
    assert_eq!(cfg.batch_indices(2, 5), cfg.batch_indices(2, 5));
}

#[test]
fn precision_mismatch_is_rejected() {
    let data = small_set(3);
    let mut st = state64();
    let cfg = StageConfig {
        precision: Precision::F32,
        ..stage(MaskStrategy::Patch, 1)
    };
    assert!(run_stage(&cfg, &mut st, &data).is_err());
}

#[test]
fn empty_pipeline_stages_are_identity_with_tags() {
    let data = small_set(4);
    let mut st = state64();
    let before = st.model.backbone_digest();
    let mut tags = Vec::new();
    let stages = Variant::Ia.stages(&stage(MaskStrategy::Patch, 0));
    run_staged_pipeline(&stages, 0, &mut st, &data, |ck, _| {
        tags.push(ck.stage.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(tags, ["stage1-patch", "stage2-object", "stage3-ia"]);
    assert_eq!(before, st.model.backbone_digest());
    assert_eq!(st.global_step, 0);
}

#[test]
fn variants_share_the_first_stage() {
    let data = small_set(6);
    let mut firsts = Vec::new();
    for v in [Variant::Baseline, Variant::Ia] {
        let mut st = state64();
        let stages = v.stages(&stage(MaskStrategy::Patch, 3));
        let mut ckpts = Vec::new();
        run_staged_pipeline(&stages, 0, &mut st, &data, |ck, _| {
            ckpts.push(encode_checkpoint(ck)?);
            Ok(())
        })
        .unwrap();
        assert_eq!(st.global_step, 9);
        firsts.push(ckpts);
    }
    assert_eq!(firsts[0][0], firsts[1][0]);
    assert_ne!(firsts[0][2], firsts[1][2]);
}

#[test]
fn optimizer_resets_at_stage_boundaries() {
    let data = small_set(4);
    let mut st = state64();
    let stages = Variant::Baseline.stages(&stage(MaskStrategy::Patch, 2));
    run_staged_pipeline(&stages, 0, &mut st, &data, |_, _| Ok(())).unwrap();
    assert!(st.opt_phi.iter().all(|s| s.t == 2));
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let data = small_set(4);
    let mut st = state64();
    run_stage(&stage(MaskStrategy::Patch, 2), &mut st, &data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.iajc");
    save_checkpoint(&p, &st).unwrap();
    let back: Checkpoint<f64> = load_checkpoint(&p).unwrap();
    assert_eq!(encode_checkpoint(&back).unwrap(), std::fs::read(&p).unwrap());
    assert_eq!(back.stage_step, 2);
    assert_eq!(back.model.backbone_digest(), st.model.backbone_digest());

    let st32: Checkpoint<f32> = Checkpoint::new(JepaModel::init(&small_model(), 1).unwrap(), &NormConstants::default(), "x");
    let bytes = encode_checkpoint(&st32).unwrap();
    let back32: Checkpoint<f32> = decode_checkpoint(&bytes).unwrap();
    assert_eq!(encode_checkpoint(&back32).unwrap(), bytes);
}

#[test]
fn resume_continues_the_trajectory_exactly() {
    let data = small_set(6);
    let full_cfg = stage(MaskStrategy::Ia, 10);
    let mut full = state64();
    let all = run_stage(&full_cfg, &mut full, &data).unwrap().losses;

    let mut part = state64();
    let first = run_stage(&stage(MaskStrategy::Ia, 5), &mut part, &data).unwrap().losses;
    let mut resumed: Checkpoint<f64> = decode_checkpoint(&encode_checkpoint(&part).unwrap()).unwrap();
    let rest = run_stage(&full_cfg, &mut resumed, &data).unwrap();
    assert_eq!(rest.first_step, 5);
    let joined: Vec<u64> = first.iter().chain(&rest.losses).map(|v| v.to_bits()).collect();
    assert_eq!(joined, all.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(encode_checkpoint(&resumed).unwrap(), encode_checkpoint(&full).unwrap());
}

#[test]
fn damaged_checkpoints_are_format_errors() {
    let bytes = encode_checkpoint(&state64()).unwrap();
    let mut bad = bytes.clone();
    bad[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(matches!(decode_checkpoint::<f64>(&bad), Err(Error::Format { .. })));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_checkpoint::<f64>(&bad), Err(Error::Format { offset: 0, .. })));
    let mut bad = bytes.clone();
    bad[4] = 7;
    assert!(matches!(decode_checkpoint::<f64>(&bad), Err(Error::Format { offset: 4, .. })));
    assert!(matches!(decode_checkpoint::<f64>(&bytes[..bytes.len() - 3]), Err(Error::Format { .. })));
}

#[test]
fn extraction_is_deterministic_and_frozen() {
    let data = small_set(5);
    let st: Checkpoint<f32> = Checkpoint::new(JepaModel::init(&small_model(), 2).unwrap(), &NormConstants::default(), "x");
    let digest = st.model.backbone_digest();
    let a = extract_features(&st, &data, 1).unwrap();
    let b = extract_features(&st, &data, 2).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dims, [2, 16, 8]);
    assert_eq!(a.values.len(), 5 * 2 * 16 * 8);
    assert_eq!(a.ids, vec![0, 1, 2, 3, 4]);
    assert_eq!(digest, st.model.backbone_digest());
}

#[test]
fn skipping_normalization_changes_features() {
    let data = small_set(2);
    let st: Checkpoint<f32> = Checkpoint::new(JepaModel::init(&small_model(), 2).unwrap(), &NormConstants::default(), "x");
    let good = extract_features(&st, &data, 1).unwrap();
    let raw = extract_unchecked(&st, &data, &NormConstants::identity(), 1).unwrap();
    let diff = good
        .values
        .iter()
        .zip(&raw.values)
        .fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
    assert!(diff > 0.0);
}

#[test]
fn mismatched_normalization_is_refused() {
    let data = TrainSet::generate(&small_world(), &small_grid(), &NormConstants::identity(), 2, 0, 1).unwrap();
    let st: Checkpoint<f32> = Checkpoint::new(JepaModel::init(&small_model(), 2).unwrap(), &NormConstants::default(), "x");
    assert!(matches!(extract_features(&st, &data, 1), Err(Error::NormalizationMandate { .. })));
    let mut st64 = state64();
    assert!(matches!(
        run_stage(&stage(MaskStrategy::Patch, 1), &mut st64, &data),
        Err(Error::NormalizationMandate { .. })
    ));
}

#[test]
fn bank_round_trip_and_payload_size() {
    let n = 3;
    let values: Vec<f32> = (0..n * 8 * 36 * 192).map(|i| (i as f32).sin()).collect();
    let bank = FeatureBank::new(vec![4, 9, 11], [8, 36, 192], values, "abc".into()).unwrap();
    let bytes = encode_featurebank(&bank).unwrap();
    let header = 4 + 4 + 4 + 12 + 4 + 3 + 4 + 4 * n;
    assert_eq!(bytes.len() - header, 4 * n * 8 * 36 * 192);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.iajf");
    write_featurebank(&p, &bank).unwrap();
    let back = read_featurebank(&p).unwrap();
    assert!(back.values.iter().zip(&bank.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(back, bank);
    let mut bad = bytes.clone();
    bad[4] = 2;
    assert!(matches!(decode_featurebank(&bad), Err(Error::Format { offset: 4, .. })));
    assert!(decode_featurebank(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn variant_names_parse() {
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
    }
    assert!("random".parse::<Variant>().is_err());
}

#[test]
fn tiny_config_loss_decreases() {
    let cfg = ModelConfig::tiny();
    let data = TrainSet::generate(&WorldConfig::default(), &cfg.grid, &NormConstants::default(), 32, 0, 1).unwrap();
    let mut st: Checkpoint<f32> = Checkpoint::new(JepaModel::init(&cfg, 0).unwrap(), data.norm(), "tiny");
    let sc = StageConfig {
        steps: 100,
        ..StageConfig::default()
    };
    st.begin_stage("stage1-patch", &sc);
    let l = run_stage(&sc, &mut st, &data).unwrap().losses;
    let head = l[..10].iter().sum::<f64>() / 10.0;
    let tail = l[89..].iter().sum::<f64>() / 11.0;
    assert!(tail < head, "{head} -> {tail}");
}
