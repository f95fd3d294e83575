use std::collections::BTreeMap;
use std::fs;

use rbvsr::checkpoint::{load_checkpoint, save_checkpoint, CheckpointBundle, FORMAT_VERSION};
use rbvsr::config::{parse_override, Profile, RunConfig};
use rbvsr::extract::extract_frames;
use rbvsr::fit::new_state;
use rbvsr::flowstore::{decode_flow, encode_flow, flow_path, precompute_flows, read_flow};
use rbvsr::frames::{frame_file_name, read_clip_dir, write_clip, write_frame};
use rbvsr::Error;
use rbvsr_core::flow::{FlowMap, FlowParams};
use rbvsr_core::generator::GeneratorConfig;
use rbvsr_core::pipeline::make_pair;
use rbvsr_core::toy::toy_clip;
use rbvsr_core::trainer::{AblationMode, TrainState};
use rbvsr_core::{Error as CoreError, Frame};
use serde_json::json;

fn tiny_cfg() -> RunConfig {
    let mut cfg = RunConfig::for_profile(Profile::Tiny);
    cfg.train.batch_size = 1;
    cfg
}

fn trained_state() -> TrainState {
    let mut st = new_state(&tiny_cfg()).unwrap();
    let clip = toy_clip(1, 0, 3, 32, 32).unwrap();
    let pairs: Vec<_> = clip.frames().iter().map(|f| make_pair(f, 4).unwrap()).collect();
    let w = rbvsr_core::generator::static_window(
        &pairs[2].0,
        &[pairs[1].0.clone(), pairs[0].0.clone()],
        Some(pairs[2].1.clone()),
    );
    for _ in 0..3 {
        rbvsr_core::trainer::train_step(&mut st, std::slice::from_ref(&w)).unwrap();
    }
    st
}

#[test]
fn checkpoint_roundtrip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let st = trained_state();
    let bundle = CheckpointBundle::from_state(&st);
    let path = dir.path().join("a.isbc");
    save_checkpoint(&bundle, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, bundle);
    assert!(loaded.to_bytes().unwrap() == fs::read(&path).unwrap());

    // restoring into a fresh state and saving again reproduces the file
    let mut fresh = new_state(&tiny_cfg()).unwrap();
    loaded.load_into(&mut fresh).unwrap();
    assert_eq!(fresh.step, 3);
    assert_eq!(fresh.g_opt.steps, st.g_opt.steps);
    assert!(CheckpointBundle::from_state(&fresh).to_bytes().unwrap() == loaded.to_bytes().unwrap());
}

#[test]
fn checkpoint_version_is_checked() {
    let bytes = CheckpointBundle::from_state(&trained_state()).to_bytes().unwrap();
    let mut bad = bytes.clone();
    bad[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    let err = CheckpointBundle::from_bytes(&bad, "x".as_ref()).unwrap_err();
    assert!(matches!(err, Error::VersionMismatch { found, expected } if found == FORMAT_VERSION + 1 && expected == FORMAT_VERSION));
    assert!(err.to_string().contains("VersionMismatch"));

    let err = CheckpointBundle::from_bytes(&bytes[..bytes.len() - 3], "x".as_ref()).unwrap_err();
    assert!(matches!(err, Error::Corrupt { .. }), "{err}");
    let err = CheckpointBundle::from_bytes(b"nope", "x".as_ref()).unwrap_err();
    assert!(matches!(err, Error::Corrupt { .. }), "{err}");
}

#[test]
fn checkpoint_into_a_different_architecture_is_a_shape_mismatch() {
    let bundle = CheckpointBundle::from_state(&trained_state());
    let mut cfg = tiny_cfg();
    cfg.generator = GeneratorConfig {
        feat_channels: 6,
        ..GeneratorConfig::tiny()
    };
    let mut other = new_state(&cfg).unwrap();
    let err = bundle.load_into(&mut other).unwrap_err();
    assert!(matches!(err, Error::Core(CoreError::ShapeMismatch(_))), "{err}");
}

#[test]
fn inference_generator_matches_the_training_state() {
    let st = trained_state();
    let g = CheckpointBundle::from_state(&st).generator().unwrap();
    // parameters pass through f32 storage
    let a = st.generator.params().to_named();
    let b = g.params().to_named();
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, t) in &a {
        for (x, y) in t.data().iter().zip(b[k].data()) {
            assert_eq!(*x as f32 as f64, *y, "{k}");
        }
    }
}

#[test]
fn flow_file_roundtrip() {
    let u: Vec<f32> = (0..12).map(|i| i as f32 * 0.25 - 1.0).collect();
    let v: Vec<f32> = (0..12).map(|i| (i as f32).sin()).collect();
    let f = FlowMap::new(3, 4, u, v).unwrap();
    let bytes = encode_flow(&f);
    assert_eq!(&bytes[..4], b"FLO1");
    assert_eq!(decode_flow(&bytes, "f".as_ref()).unwrap(), f);
    assert!(matches!(decode_flow(&bytes[..bytes.len() - 1], "f".as_ref()), Err(Error::Corrupt { .. })));
}

#[test]
fn flow_precompute_covers_every_window_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let hr = toy_clip(2, 0, 7, 32, 32).unwrap();
    let lr: Vec<Frame> = hr.frames().iter().map(|f| make_pair(f, 4).unwrap().0).collect();
    let lr = rbvsr_core::pipeline::Clip::new("c", "mem", lr).unwrap();
    let params = FlowParams {
        iterations: 20,
        ..FlowParams::default()
    };
    let written = precompute_flows(&lr, 6, &params, dir.path()).unwrap();
    assert_eq!(written, 7 * 6);
    for k in 1..=6 {
        let f = read_flow(&flow_path(dir.path(), "c", 6, k)).unwrap();
        assert_eq!(f.dims(), (8, 8));
    }
    assert_eq!(precompute_flows(&lr, 6, &params, dir.path()).unwrap(), 0);
}

#[test]
fn frame_directories() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert!(matches!(read_clip_dir(&empty, "e"), Err(Error::UnreadableSource(_))));
    assert!(matches!(
        extract_frames(&dir.path().join("missing.mp4"), &dir.path().join("o")),
        Err(Error::UnreadableSource(_))
    ));

    let single = dir.path().join("single");
    write_frame(&single.join(frame_file_name(0)), &Frame::constant(8, 8, 0.5)).unwrap();
    let clip = extract_frames(&single, &dir.path().join("out")).unwrap();
    assert_eq!(clip.len(), 1);
    assert!(dir.path().join("out/000000.png").is_file());

    let mixed = dir.path().join("mixed");
    write_frame(&mixed.join(frame_file_name(0)), &Frame::constant(8, 8, 0.5)).unwrap();
    write_frame(&mixed.join(frame_file_name(1)), &Frame::constant(8, 12, 0.5)).unwrap();
    assert!(matches!(
        read_clip_dir(&mixed, "m"),
        Err(Error::Core(CoreError::InconsistentDimensions(_)))
    ));
}

#[test]
fn frames_survive_png_storage() {
    let dir = tempfile::tempdir().unwrap();
    let clip = toy_clip(3, 1, 4, 16, 24).unwrap();
    assert_eq!(write_clip(dir.path(), &clip).unwrap(), 4);
    assert_eq!(write_clip(dir.path(), &clip).unwrap(), 0);
    let back = read_clip_dir(&dir.path().join(&clip.clip_id), &clip.clip_id).unwrap();
    for (a, b) in clip.frames().iter().zip(back.frames()) {
        assert_eq!(&a.quantized(), b);
    }
}

#[test]
fn config_resolution_order() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.json");
    fs::write(
        &file,
        json!({ "profile": "tiny", "train.learning_rate": 0.001, "train": { "seed": 9 } }).to_string(),
    )
    .unwrap();
    let mut ov = BTreeMap::new();
    let (k, v) = parse_override("train.seed=11").unwrap();
    ov.insert(k, v);
    let (k, v) = parse_override("train.ablation_mode=MSE_ONLY").unwrap();
    ov.insert(k, v);
    let cfg = RunConfig::resolve(Some(&file), None, &ov).unwrap();
    assert_eq!(cfg.profile, Profile::Tiny);
    assert_eq!(cfg.generator, GeneratorConfig::tiny());
    assert_eq!(cfg.train.learning_rate, 0.001);
    assert_eq!(cfg.train.seed, 11);
    assert_eq!(cfg.train.ablation_mode, AblationMode::MseOnly);

    // the flat form alone reproduces the config
    let flat = dir.path().join("flat.json");
    fs::write(&flat, cfg.to_flat_json()).unwrap();
    assert_eq!(RunConfig::resolve(Some(&flat), None, &BTreeMap::new()).unwrap(), cfg);

    let mut bad = BTreeMap::new();
    bad.insert("train.learning_rat".to_string(), json!(1.0));
    let err = RunConfig::resolve(None, Some(Profile::Tiny), &bad).unwrap_err();
    assert!(matches!(err, Error::Core(CoreError::InvalidConfig(_))));
    assert_eq!(err.exit_code(), 2);
    let mut bad = BTreeMap::new();
    bad.insert("generator.scale".to_string(), json!(2));
    assert!(RunConfig::resolve(None, Some(Profile::Tiny), &bad).is_err());
}
