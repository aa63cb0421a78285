//! End-to-end stages: generate a dataset directory, prepare splits,
//! fit any of the eight models, and score them on held-out runs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    load_runs_csv, split_indices, write_run_csv, PathSpec, SensorRun, SplitAssignment, WindowedDataset,
};
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, PredictionTrace, DEFAULT_TAU};
use crate::model::{Estimator, ModelKind, SplitRecord, TrainedModel};
use crate::neural::{self, build_architecture, EpochLog};
use crate::pathsim::{generate_runs, FeatureSet, SimConfig};
use crate::preprocess::{clean_run, make_windows_strided, select_features, DenseRun, NormParams};
use crate::tree::{fit_forest, fit_tree, ForestParams, Samples, TreeParams};

pub const DEFAULT_WINDOW: usize = 30;
pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.7, 0.15, 0.15);
pub const PATH_FILE: &str = "path.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Seed of a named pipeline stage derived from the user-facing seed.
pub fn sub_seed(seed: u64, stage: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stage.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

pub const SPLIT_STAGE: u64 = 1;

/// Path number as used on the command line: 1 and 2 carry every sensor,
/// 3 only the IMU.
pub fn path_for_number(number: u8) -> Result<(String, FeatureSet)> {
    match number {
        1 | 2 => Ok((format!("path_{number}"), FeatureSet::Full17)),
        3 => Ok(("path_3".into(), FeatureSet::Imu9)),
        other => Err(Error::config("paths", format!("path must be 1, 2 or 3, got {other}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub path_id: String,
    pub config: SimConfig,
    pub runs: Vec<ManifestEntry>,
    pub path_file_sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Simulates `config` on `path_id` and writes one CSV per run, the path
/// description and a checksummed manifest into `out`.
pub fn generate_dataset(config: &SimConfig, path_id: &str, out: &Path) -> Result<Manifest> {
    let spec = config.path_spec(path_id)?;
    let runs = generate_runs(config, &spec)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path_text = spec.to_toml_string();
    let path_file = out.join(PATH_FILE);
    fs::write(&path_file, &path_text).map_err(|e| Error::io(&path_file, e))?;
    let mut entries = Vec::with_capacity(runs.len());
    for run in &runs {
        let name = format!("{}.csv", run.run_id);
        let file = out.join(&name);
        write_run_csv(run, &spec, &file)?;
        let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
        entries.push(ManifestEntry {
            file: name,
            rows: run.len(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        path_id: path_id.into(),
        config: config.clone(),
        runs: entries,
        path_file_sha256: sha256_hex(path_text.as_bytes()),
    };
    let manifest_file = out.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&manifest_file, json + "\n").map_err(|e| Error::io(&manifest_file, e))?;
    Ok(manifest)
}

/// Reads `path.toml` and every run CSV of a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<(PathSpec, Vec<SensorRun>)> {
    let spec = PathSpec::load(&dir.join(PATH_FILE))?;
    let runs = load_runs_csv(dir, &spec)?;
    if runs.is_empty() {
        return Err(Error::Ingestion {
            location: dir.display().to_string(),
            message: "no run CSV files found".into(),
        });
    }
    Ok((spec, runs))
}

/// Cleaned, split and train-normalized runs.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub path: PathSpec,
    pub norm: NormParams,
    pub split: SplitRecord,
    pub assignment: SplitAssignment,
    pub train: Vec<DenseRun>,
    pub val: Vec<DenseRun>,
    pub test: Vec<DenseRun>,
}

impl PreparedData {
    pub fn class_count(&self) -> usize {
        self.path.n_segments()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.norm.feature_names
    }
}

/// Fill gaps, smooth, split whole runs, and min-max scale with parameters
/// fitted on training runs only. `features` optionally narrows the columns.
pub fn prepare(
    path: &PathSpec,
    runs: &[SensorRun],
    split: &SplitRecord,
    features: Option<&[String]>,
) -> Result<PreparedData> {
    let mut dense = Vec::with_capacity(runs.len());
    for run in runs {
        run.validate(path.n_segments())?;
        let run = match features {
            Some(keep) => select_features(run, keep)?,
            None => run.clone(),
        };
        dense.push(clean_run(&run)?);
    }
    let assignment = split_indices(dense.len(), split.fractions, split.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| dense[i].clone()).collect::<Vec<_>>();
    let train_raw = pick(&assignment.train);
    let norm = NormParams::fit(&train_raw)?;
    let scale = |rs: Vec<DenseRun>| rs.iter().map(|r| norm.apply(r)).collect::<Result<Vec<_>>>();
    let train = scale(train_raw)?;
    let val = scale(pick(&assignment.val))?;
    let test = scale(pick(&assignment.test))?;
    let mut path = path.clone();
    path.feature_names = norm.feature_names.clone();
    Ok(PreparedData {
        path,
        norm: norm.clone(),
        split: split.clone(),
        assignment,
        train,
        val,
        test,
    })
}

/// Knobs that shrink a run to desk scale; `None` keeps the published value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    /// Keep every `train_stride`-th training window (1 keeps all).
    pub train_stride: Option<usize>,
    /// Keep every `val_stride`-th validation window for the epoch log.
    pub val_stride: Option<usize>,
}

impl TrainOverrides {
    /// Fills unset fields from `fallback`.
    pub fn or(&self, fallback: &TrainOverrides) -> TrainOverrides {
        TrainOverrides {
            epochs: self.epochs.or(fallback.epochs),
            learning_rate: self.learning_rate.or(fallback.learning_rate),
            batch_size: self.batch_size.or(fallback.batch_size),
            train_stride: self.train_stride.or(fallback.train_stride),
            val_stride: self.val_stride.or(fallback.val_stride),
        }
    }
}

/// Settings under which every model trains on a single laptop core in
/// minutes: the published learning rates are raised to compensate for
/// far fewer optimizer steps.
pub fn desk_profile(kind: ModelKind) -> TrainOverrides {
    let o = |epochs, learning_rate, batch_size, train_stride| TrainOverrides {
        epochs: Some(epochs),
        learning_rate: Some(learning_rate),
        batch_size: Some(batch_size),
        train_stride: Some(train_stride),
        val_stride: Some(8),
    };
    match kind {
        ModelKind::Dt | ModelKind::Rf => TrainOverrides {
            train_stride: Some(2),
            ..TrainOverrides::default()
        },
        ModelKind::Mlp => o(8, 1e-3, 64, 2),
        ModelKind::Fcn => o(4, 3e-3, 64, 4),
        ModelKind::Cnn1d => o(6, 1e-3, 64, 3),
        ModelKind::Cnn2d => o(4, 1e-3, 64, 4),
        ModelKind::Lstm => o(6, 3e-3, 64, 3),
        ModelKind::Bilstm => o(5, 3e-3, 64, 4),
    }
}

/// Windowed view of prepared runs.
pub fn windows(runs: &[DenseRun], j: usize, stride: usize, class_count: usize) -> Result<WindowedDataset> {
    make_windows_strided(runs, j, stride, class_count)
}

/// Fits `kind` on the training runs of `data`.
pub fn train_model(
    kind: ModelKind,
    data: &PreparedData,
    j: usize,
    seed: u64,
    overrides: &TrainOverrides,
) -> Result<(TrainedModel, Vec<EpochLog>)> {
    let classes = data.class_count();
    let train_ds = windows(&data.train, j, overrides.train_stride.unwrap_or(1), classes)?;
    let n = data.feature_names().len();
    let mut log = Vec::new();
    let estimator = match kind {
        ModelKind::Dt => {
            let params = TreeParams::default();
            let tree = fit_tree(
                Samples::new(&train_ds.windows, j * n)?,
                &train_ds.labels,
                classes,
                params,
            )?;
            Estimator::Tree { params, tree }
        }
        ModelKind::Rf => {
            let params = ForestParams::default();
            let forest = fit_forest(
                Samples::new(&train_ds.windows, j * n)?,
                &train_ds.labels,
                classes,
                params,
                seed,
            )?;
            Estimator::Forest { params, forest }
        }
        _ => {
            let mut spec = build_architecture(kind.name(), j, n, classes)?;
            if let Some(e) = overrides.epochs {
                spec.training.epochs = e;
            }
            if let Some(lr) = overrides.learning_rate {
                spec.training.learning_rate = lr;
            }
            if let Some(b) = overrides.batch_size {
                spec.training.batch_size = b;
            }
            let val_ds = if data.val.is_empty() {
                train_ds.filter(|_| false)
            } else {
                windows(&data.val, j, overrides.val_stride.unwrap_or(1), classes)?
            };
            let (net, epochs) = neural::train(&spec, &train_ds, &val_ds, seed)?;
            log = epochs;
            Estimator::Net(net)
        }
    };
    Ok((
        TrainedModel {
            kind,
            path_id: data.path.path_id.clone(),
            seed,
            j,
            n,
            class_names: data.path.segment_labels.clone(),
            norm: data.norm.clone(),
            split: data.split.clone(),
            estimator,
        },
        log,
    ))
}

/// Scores `model` on every stride-1 window of `runs`.
pub fn evaluate_model(model: &TrainedModel, runs: &[DenseRun], tau: i64) -> Result<MetricsReport> {
    if let Some(r) = runs.first() {
        if r.feature_names != model.norm.feature_names {
            return Err(Error::shape(format!(
                "model expects features {:?}, data has {:?}",
                model.norm.feature_names, r.feature_names
            )));
        }
    }
    let ds = windows(runs, model.j, 1, model.classes())?;
    let refs: Vec<&[f64]> = ds.iter_windows().collect();
    let predicted = model.predict(&refs)?;
    let trace = PredictionTrace::from_windows(&ds, &predicted)?;
    MetricsReport::compute(model.kind.name(), &model.path_id, &trace, tau, &model.class_names)
}

/// Re-prepares raw runs exactly as at training time (same split, same
/// normalization) and returns the held-out test runs.
pub fn test_runs_for(model: &TrainedModel, path: &PathSpec, runs: &[SensorRun]) -> Result<Vec<DenseRun>> {
    let keep: Vec<String> = model.norm.feature_names.clone();
    let needs_select = path.feature_names != keep;
    if needs_select && keep.iter().any(|f| !path.feature_names.contains(f)) {
        return Err(Error::shape(format!(
            "model expects features {keep:?}, dataset has {:?}",
            path.feature_names
        )));
    }
    if path.n_segments() != model.classes() {
        return Err(Error::shape(format!(
            "model has {} classes, dataset path has {} segments",
            model.classes(),
            path.n_segments()
        )));
    }
    let mut dense = Vec::with_capacity(runs.len());
    for run in runs {
        run.validate(path.n_segments())?;
        let run = if needs_select {
            select_features(run, &keep)?
        } else {
            run.clone()
        };
        dense.push(clean_run(&run)?);
    }
    let assignment = split_indices(dense.len(), model.split.fractions, model.split.seed)?;
    assignment.test.iter().map(|&i| model.norm.apply(&dense[i])).collect()
}

/// Writes a training log with one row per epoch.
pub fn write_epoch_log(log: &[EpochLog], file: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(file).map_err(|e| crate::metrics::csv_error(file, e))?;
    w.write_record(["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"])
        .map_err(|e| crate::metrics::csv_error(file, e))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in log {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.train_accuracy.to_string(),
            opt(e.val_loss),
            opt(e.val_accuracy),
        ])
        .map_err(|e| crate::metrics::csv_error(file, e))?;
    }
    w.flush().map_err(|e| Error::io(file, e))
}

/// Default split record for a training seed.
pub fn split_for_seed(seed: u64) -> SplitRecord {
    SplitRecord {
        seed: sub_seed(seed, SPLIT_STAGE),
        fractions: DEFAULT_FRACTIONS,
    }
}

/// Experiment description readable from a TOML file: simulation settings,
/// window length, loc-score tolerance and per-model overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "benchmark_sim_config")]
    pub sim: SimConfig,
    #[serde(default = "default_path")]
    pub path: u8,
    #[serde(default = "default_window")]
    pub j: usize,
    #[serde(default = "default_tau")]
    pub tau: i64,
    #[serde(default)]
    pub desk_scale: bool,
    #[serde(default)]
    pub overrides: TrainOverrides,
}

fn default_path() -> u8 {
    1
}
fn default_window() -> usize {
    DEFAULT_WINDOW
}
fn default_tau() -> i64 {
    DEFAULT_TAU
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sim: benchmark_sim_config(),
            path: 1,
            j: DEFAULT_WINDOW,
            tau: DEFAULT_TAU,
            desk_scale: false,
            overrides: TrainOverrides::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(file: &Path) -> Result<Self> {
        let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        path_for_number(self.path)?;
        if self.j == 0 {
            return Err(Error::config("j", "window length must be at least 1"));
        }
        if self.tau < 0 {
            return Err(Error::config("tau", "must be non-negative"));
        }
        Ok(())
    }

    /// Overrides in effect for `kind`: explicit values win over the desk profile.
    pub fn overrides_for(&self, kind: ModelKind) -> TrainOverrides {
        if self.desk_scale {
            self.overrides.or(&desk_profile(kind))
        } else {
            self.overrides.clone()
        }
    }
}

/// Simulation settings of the reference benchmark: default geometry with
/// sensor noise at 0.7 of the simulator default.
pub fn benchmark_sim_config() -> SimConfig {
    SimConfig {
        noise_scale: 0.7,
        ..SimConfig::default()
    }
}

/// Default file name of a model inside a models directory.
pub fn model_file(dir: &Path, kind: ModelKind) -> PathBuf {
    dir.join(format!("{}.model", kind.name()))
}
