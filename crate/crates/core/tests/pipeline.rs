use std::fs;

use pathseg::bench::{bench_suite, cycle_batch, measure_latency, memory_footprint, BenchProtocol, SuiteEntry};
use pathseg::dataset::{imu_feature_names, write_run_csv, PathSpec, SensorRun};
use pathseg::model::{Estimator, ModelKind, TrainedModel};
use pathseg::neural::build_architecture;
use pathseg::pathsim::SimConfig;
use pathseg::pipeline::{
    self, evaluate_model, generate_dataset, load_dataset, prepare, split_for_seed, train_model, windows, PreparedData,
    TrainOverrides,
};
use pathseg::tree::TreeParams;

fn quick_data(seed: u64) -> PreparedData {
    let config = SimConfig {
        seed,
        n_runs: 8,
        noise_scale: 0.7,
        ..SimConfig::default()
    };
    let path = config.path_spec("path_1").unwrap();
    let runs = pathseg::pathsim::generate_runs(&config, &path).unwrap();
    prepare(&path, &runs, &split_for_seed(seed), None).unwrap()
}

fn quick(kind: ModelKind) -> TrainOverrides {
    TrainOverrides {
        epochs: Some(1),
        learning_rate: Some(1e-3),
        batch_size: Some(64),
        train_stride: Some(8),
        val_stride: Some(16),
    }
    .or(&pipeline::desk_profile(kind))
}

#[test]
fn loads_runs_of_different_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let spec = PathSpec::synthetic("path_x", 3, imu_feature_names()).unwrap();
    fs::write(dir.path().join(pipeline::PATH_FILE), spec.to_toml_string()).unwrap();
    for (i, k) in [100usize, 120, 90].into_iter().enumerate() {
        let columns = (0..9).map(|f| (0..k).map(|t| Some((t * f) as f64)).collect()).collect();
        let labels = (0..k).map(|t| t * 3 / k).collect();
        let timestamps = (0..k).map(|t| t as f64 / 24.0).collect();
        let run = SensorRun::new(format!("r{i}"), imu_feature_names(), timestamps, columns, labels, 3).unwrap();
        write_run_csv(&run, &spec, &dir.path().join(format!("r{i}.csv"))).unwrap();
    }
    let (_, runs) = load_dataset(dir.path()).unwrap();
    for (i, run) in runs.iter().enumerate() {
        let text = fs::read_to_string(dir.path().join(format!("r{i}.csv"))).unwrap();
        assert_eq!(run.len(), text.lines().count() - 1);
    }
    assert_eq!(runs.iter().map(SensorRun::len).collect::<Vec<_>>(), vec![100, 120, 90]);
}

#[test]
fn generation_checksums_are_stable() {
    let config = SimConfig {
        n_runs: 3,
        ..SimConfig::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = generate_dataset(&config, "path_1", a.path()).unwrap();
    let mb = generate_dataset(&config, "path_1", b.path()).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(ma.runs.len(), 3);
}

#[test]
fn training_is_seed_deterministic() {
    let data = quick_data(3);
    for kind in [ModelKind::Dt, ModelKind::Mlp] {
        let (a, _) = train_model(kind, &data, 10, 5, &quick(kind)).unwrap();
        let (b, _) = train_model(kind, &data, 10, 5, &quick(kind)).unwrap();
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap(), "{kind}");
    }
}

#[test]
fn envelopes_round_trip_every_kind() {
    let data = quick_data(4);
    let dir = tempfile::tempdir().unwrap();
    let ds = windows(&data.test, 6, 5, data.class_count()).unwrap();
    let probe: Vec<&[f64]> = ds.iter_windows().take(40).collect();
    for kind in ModelKind::ALL {
        let (model, log) = train_model(kind, &data, 6, 1, &quick(kind)).unwrap();
        assert_eq!(log.len(), if kind.is_neural() { 1 } else { 0 });
        let file = pipeline::model_file(dir.path(), kind);
        model.save(&file).unwrap();
        let back = TrainedModel::load(&file).unwrap();
        assert_eq!(back.predict(&probe).unwrap(), model.predict(&probe).unwrap(), "{kind}");
        assert_eq!(back.to_bytes().unwrap(), model.to_bytes().unwrap());
        assert!(pathseg::model::norm_path(&file).exists());
    }
}

#[test]
fn mlp_footprint_tracks_parameter_count() {
    let data = quick_data(5);
    let (model, _) = train_model(ModelKind::Mlp, &data, 30, 1, &quick(ModelKind::Mlp)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("mlp.model");
    model.save(&file).unwrap();
    // per-step dense 17→64, two dense 64→64, flatten 30·64 → 8 classes
    let count = 17 * 64 + 64 + 2 * (64 * 64 + 64) + 30 * 64 * 8 + 8;
    let spec = build_architecture("mlp", 30, 17, 8).unwrap();
    assert_eq!(spec.param_count().unwrap(), count);
    let bytes = memory_footprint(&file).unwrap();
    assert_eq!(bytes, model.to_bytes().unwrap().len() as u64);
    let weights = (8 * count) as f64;
    assert!(
        (bytes as f64 - weights).abs() / weights < 0.01,
        "{bytes} bytes for {count} params"
    );
}

#[test]
fn leaf_tree_is_smaller_than_deep_tree() {
    let data = quick_data(6);
    let (deep, _) = train_model(ModelKind::Dt, &data, 5, 1, &quick(ModelKind::Dt)).unwrap();
    let mut stump = deep;
    if let Estimator::Tree { tree, .. } = &mut stump.estimator {
        let leaf = pathseg::tree::TreeNode::leaf(tree.root.counts());
        let deep_len = serde_json::to_string(&tree.root).unwrap().len();
        tree.root = leaf;
        assert!(serde_json::to_string(&tree.root).unwrap().len() < deep_len);
    }
    let (deep, _) = train_model(ModelKind::Dt, &data, 5, 1, &quick(ModelKind::Dt)).unwrap();
    assert!(stump.to_bytes().unwrap().len() < deep.to_bytes().unwrap().len());
    assert!(!stump.to_bytes().unwrap().is_empty());
    assert_eq!(TreeParams::default().max_depth, 14);
}

#[test]
fn latency_protocol_is_consistent() {
    let data = quick_data(7);
    let (dt, _) = train_model(ModelKind::Dt, &data, 30, 1, &quick(ModelKind::Dt)).unwrap();
    let (mlp, _) = train_model(ModelKind::Mlp, &data, 30, 1, &quick(ModelKind::Mlp)).unwrap();
    let ds = windows(&data.test, 30, 1, data.class_count()).unwrap();
    let pool: Vec<&[f64]> = ds.iter_windows().collect();
    let protocol = BenchProtocol {
        batch_size: 2_000,
        repetitions: 10,
        ..BenchProtocol::default()
    };
    let batch = cycle_batch(&pool, protocol.batch_size).unwrap();
    let probe = &batch[..50];
    let before = (dt.predict(probe).unwrap(), mlp.predict(probe).unwrap());

    let rd = measure_latency(&dt, &batch, &protocol, 1).unwrap();
    let rm = measure_latency(&mlp, &batch, &protocol, 1).unwrap();
    for r in [&rd, &rm] {
        assert_eq!(r.passes.len(), 10);
        for p in &r.passes {
            assert!((p.latency_ms * p.throughput_per_ms - 1.0).abs() < 1e-12);
        }
        let product = r.latency_ms_mean * r.throughput_per_ms_mean;
        assert!((product - 1.0).abs() < 0.1, "{product}");
        assert!(r.latency_ms_std >= 0.0);
    }
    assert!(rd.latency_ms_mean < rm.latency_ms_mean);
    assert_eq!(before, (dt.predict(probe).unwrap(), mlp.predict(probe).unwrap()));
}

#[test]
fn suite_skips_mismatched_models() {
    let data = quick_data(8);
    let (j30, _) = train_model(ModelKind::Dt, &data, 30, 1, &quick(ModelKind::Dt)).unwrap();
    let (j5, _) = train_model(ModelKind::Dt, &data, 5, 1, &quick(ModelKind::Dt)).unwrap();
    let ds = windows(&data.test, 30, 1, data.class_count()).unwrap();
    let pool: Vec<&[f64]> = ds.iter_windows().collect();
    let entry = |m| SuiteEntry {
        model: m,
        memory_bytes: 0,
        accuracy: 0.5,
        loc_score: 0.5,
    };
    let protocol = BenchProtocol {
        batch_size: 100,
        repetitions: 2,
        warmup_batches: 0,
        ..BenchProtocol::default()
    };
    let out = bench_suite(&[entry(&j30), entry(&j5)], &pool, &protocol).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.skipped.len(), 1);
}

#[test]
fn inference_ignores_dropout() {
    let data = quick_data(9);
    let (model, _) = train_model(ModelKind::Lstm, &data, 8, 1, &quick(ModelKind::Lstm)).unwrap();
    let ds = windows(&data.test, 8, 7, data.class_count()).unwrap();
    let probe: Vec<&[f64]> = ds.iter_windows().take(30).collect();
    let Estimator::Net(net) = &model.estimator else {
        unreachable!()
    };
    assert_eq!(net.predict_proba(&probe).unwrap(), net.predict_proba(&probe).unwrap());
}

#[test]
fn perfect_windows_score_one() {
    let data = quick_data(10);
    let (model, _) = train_model(
        ModelKind::Dt,
        &data,
        1,
        1,
        &TrainOverrides {
            train_stride: Some(1),
            ..TrainOverrides::default()
        },
    )
    .unwrap();
    let report = evaluate_model(&model, &data.train, 0).unwrap();
    assert!(report.accuracy > 0.95, "{}", report.accuracy);
    assert_eq!(report.accuracy, report.loc_score);
}
