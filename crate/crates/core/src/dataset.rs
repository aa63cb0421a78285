//! Paths, raw sensor runs, windowed datasets, and run-file ingestion.
//!
//! A path is partitioned into `l` labeled segments. A [`SensorRun`] is one
//! traversal of that path: a timestamped table of (possibly sparse) feature
//! columns with a ground-truth segment label on every sample. Labels are kept
//! as indices into [`PathSpec::segment_labels`] everywhere past ingestion.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The nine inertial channels: accelerometer, gyroscope, magnetometer.
pub const IMU_FEATURES: [&str; 9] = [
    "acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z", "mag_x", "mag_y", "mag_z",
];

/// Slow ambient channels: climate sensor plus the five-band light spectrum.
pub const AMBIENT_FEATURES: [&str; 8] = [
    "temperature",
    "humidity",
    "pressure",
    "spectrum_yellow",
    "spectrum_green",
    "spectrum_blue",
    "spectrum_indigo",
    "spectrum_violet",
];

/// All seventeen channels, IMU first.
pub fn full_feature_names() -> Vec<String> {
    IMU_FEATURES
        .iter()
        .chain(AMBIENT_FEATURES.iter())
        .map(|s| s.to_string())
        .collect()
}

pub fn imu_feature_names() -> Vec<String> {
    IMU_FEATURES.iter().map(|s| s.to_string()).collect()
}

/// A known path: its segment labels and the feature columns recorded on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub path_id: String,
    pub segment_labels: Vec<String>,
    pub feature_names: Vec<String>,
}

#[derive(Deserialize)]
struct PathSpecFile {
    path_id: String,
    segment_labels: Vec<String>,
    feature_names: Vec<String>,
    n_features: Option<usize>,
}

impl PathSpec {
    pub fn new(path_id: impl Into<String>, segment_labels: Vec<String>, feature_names: Vec<String>) -> Result<Self> {
        let spec = PathSpec {
            path_id: path_id.into(),
            segment_labels,
            feature_names,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Path with labels `seg_1..seg_l` over the given features.
    pub fn synthetic(path_id: &str, n_segments: usize, feature_names: Vec<String>) -> Result<Self> {
        let labels = (1..=n_segments).map(|i| format!("seg_{i}")).collect();
        PathSpec::new(path_id, labels, feature_names)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_labels.len() < 2 {
            return Err(Error::config(
                "segment_labels",
                format!("need at least 2 segments, got {}", self.segment_labels.len()),
            ));
        }
        let mut seen = HashSet::new();
        for label in &self.segment_labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::config("segment_labels", format!("duplicate label `{label}`")));
            }
        }
        if self.feature_names.is_empty() {
            return Err(Error::config("feature_names", "need at least one feature"));
        }
        let mut seen = HashSet::new();
        for name in &self.feature_names {
            if !seen.insert(name.as_str()) || name == "timestamp" || name == "label" {
                return Err(Error::config(
                    "feature_names",
                    format!("invalid or duplicate feature name `{name}`"),
                ));
            }
        }
        Ok(())
    }

    pub fn n_segments(&self) -> usize {
        self.segment_labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.segment_labels.iter().position(|l| l == label)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: PathSpecFile = toml::from_str(text).map_err(|e| Error::config("path", e.to_string()))?;
        if let Some(n) = file.n_features {
            if n != file.feature_names.len() {
                return Err(Error::config(
                    "n_features",
                    format!(
                        "declared {n} features but feature_names lists {}",
                        file.feature_names.len()
                    ),
                ));
            }
        }
        PathSpec::new(file.path_id, file.segment_labels, file.feature_names)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            path_id: &'a str,
            n_features: usize,
            segment_labels: &'a [String],
            feature_names: &'a [String],
        }
        toml::to_string(&Out {
            path_id: &self.path_id,
            n_features: self.n_features(),
            segment_labels: &self.segment_labels,
            feature_names: &self.feature_names,
        })
        .expect("path spec serializes")
    }
}

/// One raw traversal of a path.
///
/// `columns[f][i]` is feature `f` at `timestamps[i]`; `None` means no
/// measurement was acquired at that instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRun {
    pub run_id: String,
    pub feature_names: Vec<String>,
    pub timestamps: Vec<f64>,
    pub columns: Vec<Vec<Option<f64>>>,
    pub labels: Vec<usize>,
}

impl SensorRun {
    pub fn new(
        run_id: impl Into<String>,
        feature_names: Vec<String>,
        timestamps: Vec<f64>,
        columns: Vec<Vec<Option<f64>>>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        let run = SensorRun {
            run_id: run_id.into(),
            feature_names,
            timestamps,
            columns,
            labels,
        };
        run.validate(class_count)?;
        Ok(run)
    }

    pub fn validate(&self, class_count: usize) -> Result<()> {
        let loc = || format!("run `{}`", self.run_id);
        let k = self.timestamps.len();
        if self.columns.len() != self.feature_names.len() {
            return Err(Error::schema(
                loc(),
                format!(
                    "{} columns for {} feature names",
                    self.columns.len(),
                    self.feature_names.len()
                ),
            ));
        }
        if self.labels.len() != k || self.columns.iter().any(|c| c.len() != k) {
            return Err(Error::schema(loc(), "columns, labels and timestamps differ in length"));
        }
        if let Some(i) = self.timestamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Ingestion {
                location: loc(),
                message: format!("timestamps not strictly increasing at row {}", i + 1),
            });
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::schema(loc(), format!("label index {bad} out of range")));
        }
        for (name, col) in self.feature_names.iter().zip(&self.columns) {
            if col.iter().all(Option::is_none) {
                return Err(Error::schema(loc(), format!("column `{name}` has no measurements")));
            }
            if col.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::schema(loc(), format!("column `{name}` has non-finite values")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Where a window came from: run index within the source list, and the
/// timestep of its most recent sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowOrigin {
    pub run: usize,
    pub t: usize,
}

/// Dense windows of shape `(num_windows, j, n)` stored row-major, one label
/// per window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub windows: Vec<f64>,
    pub labels: Vec<usize>,
    pub origins: Vec<WindowOrigin>,
    pub run_ids: Vec<String>,
    pub j: usize,
    pub n: usize,
    pub class_count: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.j * self.n
    }

    pub fn window(&self, i: usize) -> &[f64] {
        let w = self.window_len();
        &self.windows[i * w..(i + 1) * w]
    }

    pub fn iter_windows(&self) -> impl Iterator<Item = &[f64]> {
        self.windows.chunks_exact(self.window_len().max(1))
    }

    /// Keep windows whose index satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> WindowedDataset {
        let w = self.window_len();
        let mut out = WindowedDataset {
            windows: Vec::new(),
            labels: Vec::new(),
            origins: Vec::new(),
            run_ids: self.run_ids.clone(),
            j: self.j,
            n: self.n,
            class_count: self.class_count,
        };
        for i in 0..self.len() {
            if keep(i) {
                out.windows.extend_from_slice(&self.windows[i * w..(i + 1) * w]);
                out.labels.push(self.labels[i]);
                out.origins.push(self.origins[i]);
            }
        }
        out
    }
}

/// Read every `*.csv` in `directory` (sorted by file name) as one run.
pub fn load_runs_csv(directory: &Path, spec: &PathSpec) -> Result<Vec<SensorRun>> {
    let mut files: Vec<PathBuf> = fs::read_dir(directory)
        .map_err(|e| Error::io(directory, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv") && p.is_file())
        .collect();
    files.sort();
    files.iter().map(|f| read_run_csv(f, spec)).collect()
}

/// Parse one run file. The run id is the file stem.
pub fn read_run_csv(file: &Path, spec: &PathSpec) -> Result<SensorRun> {
    let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
    let run_id = file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_run_csv(&text, &run_id, &file.display().to_string(), spec)
}

pub fn parse_run_csv(text: &str, run_id: &str, location: &str, spec: &PathSpec) -> Result<SensorRun> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::schema(location, e.to_string()))?
        .clone();
    let n = spec.n_features();
    let expected: Vec<&str> = std::iter::once("timestamp")
        .chain(spec.feature_names.iter().map(String::as_str))
        .chain(std::iter::once("label"))
        .collect();
    if header.len() != expected.len() {
        return Err(Error::schema(
            location,
            format!("header has {} columns, expected {}", header.len(), expected.len()),
        ));
    }
    for (got, want) in header.iter().zip(&expected) {
        if got.trim() != *want {
            return Err(Error::schema(
                location,
                format!("header column `{got}` where `{want}` was expected"),
            ));
        }
    }

    let mut timestamps = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); n];
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::schema(location, format!("row {row}: {e}")))?;
        if record.len() != expected.len() {
            return Err(Error::schema(
                location,
                format!("row {row} has {} columns, expected {}", record.len(), expected.len()),
            ));
        }
        let ts: f64 = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::schema(location, format!("row {row}: bad timestamp `{}`", &record[0])))?;
        if let Some(&prev) = timestamps.last() {
            if !(ts > prev) {
                return Err(Error::Ingestion {
                    location: location.to_string(),
                    message: format!("row {row}: timestamp {ts} does not increase past {prev}"),
                });
            }
        }
        timestamps.push(ts);
        for (f, col) in columns.iter_mut().enumerate() {
            let cell = record[f + 1].trim();
            if cell.is_empty() {
                col.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::schema(
                        location,
                        format!("row {row}: bad value `{cell}` for `{}`", spec.feature_names[f]),
                    )
                })?;
                col.push(Some(v));
            }
        }
        let label = record[n + 1].trim();
        let idx = spec
            .label_index(label)
            .ok_or_else(|| Error::schema(location, format!("row {row}: unknown label `{label}`")))?;
        labels.push(idx);
    }
    SensorRun::new(
        run_id,
        spec.feature_names.clone(),
        timestamps,
        columns,
        labels,
        spec.n_segments(),
    )
    .map_err(|e| match e {
        Error::Schema { message, .. } => Error::schema(location, message),
        other => other,
    })
}

/// Render a run in the run-file format. Values print in shortest
/// round-trip form so reloading is exact.
pub fn run_to_csv(run: &SensorRun, spec: &PathSpec) -> Result<String> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("timestamp")
        .chain(run.feature_names.iter().map(String::as_str))
        .chain(std::iter::once("label"))
        .collect();
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    writer.write_record(&header).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..run.len() {
        row.clear();
        row.push(format!("{}", run.timestamps[i]));
        for col in &run.columns {
            row.push(col[i].map(|v| format!("{v}")).unwrap_or_default());
        }
        let label = spec
            .segment_labels
            .get(run.labels[i])
            .ok_or_else(|| Error::schema(&run.run_id, format!("label index {} out of range", run.labels[i])))?;
        row.push(label.clone());
        writer.write_record(&row).map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_run_csv(run: &SensorRun, spec: &PathSpec, file: &Path) -> Result<()> {
    let text = run_to_csv(run, spec)?;
    fs::write(file, text).map_err(|e| Error::io(file, e))
}

/// Whole-run assignment to train / validation / test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split sizes for `n` runs.
///
/// Largest-remainder apportionment of `n * fraction`; ties on the remainder
/// go to validation, then test, then train. Any split with a positive
/// fraction that would come out empty takes one run from the largest split.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<[usize; 3]> {
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::config("fractions", "every split fraction must be positive"));
    }
    if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config("fractions", "split fractions must sum to 1"));
    }
    if n < 3 {
        return Err(Error::config(
            "fractions",
            format!("{n} runs cannot fill three non-empty splits"),
        ));
    }
    let quotas: Vec<f64> = f.iter().map(|x| x * n as f64).collect();
    let mut sizes: [usize; 3] = [0; 3];
    for (s, q) in sizes.iter_mut().zip(&quotas) {
        *s = q.floor() as usize;
    }
    let mut leftover = n - sizes.iter().sum::<usize>();
    // validation, test, train: tie-break order for equal remainders
    let mut order = [1usize, 2, 0];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter() {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }
    sizes[0] += leftover;
    for i in 0..3 {
        if sizes[i] == 0 {
            let largest = (0..3).max_by_key(|&k| (sizes[k], usize::MAX - k)).unwrap();
            sizes[largest] -= 1;
            sizes[i] += 1;
        }
    }
    Ok(sizes)
}

/// Seeded whole-run split of `n` items.
pub fn split_indices(n: usize, fractions: (f64, f64, f64), seed: u64) -> Result<SplitAssignment> {
    let [n_train, n_val, _] = split_sizes(n, fractions)?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitAssignment { train, val, test })
}

/// Split whole runs into train / validation / test lists.
pub fn split_runs<T: Clone>(runs: &[T], fractions: (f64, f64, f64), seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let a = split_indices(runs.len(), fractions, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| runs[i].clone()).collect::<Vec<_>>();
    Ok((pick(&a.train), pick(&a.val), pick(&a.test)))
}
