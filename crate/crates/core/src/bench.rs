//! Memory footprint, inference latency and throughput measurement.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::csv_error;
use crate::model::TrainedModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchProtocol {
    pub batch_size: usize,
    pub repetitions: usize,
    pub warmup_batches: usize,
    pub single_threaded: bool,
}

impl Default for BenchProtocol {
    fn default() -> Self {
        BenchProtocol {
            batch_size: 10_000,
            repetitions: 10,
            warmup_batches: 3,
            single_threaded: true,
        }
    }
}

impl BenchProtocol {
    /// Batch and repetition count of the published measurement procedure.
    pub fn published() -> Self {
        BenchProtocol {
            batch_size: 100_000,
            ..BenchProtocol::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch", "batch size must be at least 1"));
        }
        if self.repetitions < 2 {
            return Err(Error::config(
                "reps",
                format!("need at least 2 repetitions for a std, got {}", self.repetitions),
            ));
        }
        if !self.single_threaded {
            return Err(Error::config(
                "single_threaded",
                "timed passes always run on one thread",
            ));
        }
        Ok(())
    }
}

/// One timed full-batch pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pass {
    pub elapsed_ms: f64,
    pub latency_ms: f64,
    pub throughput_per_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub model_id: String,
    pub path_id: String,
    pub memory_bytes: u64,
    pub batch_size: usize,
    pub latency_ms_mean: f64,
    pub latency_ms_std: f64,
    pub throughput_per_ms_mean: f64,
    pub throughput_per_ms_std: f64,
    pub passes: Vec<Pass>,
}

/// Sample mean and (n − 1) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Size of a model file in bytes, after checking it parses as an envelope.
pub fn memory_footprint(model_file: &Path) -> Result<u64> {
    TrainedModel::load(model_file)?;
    let meta = std::fs::metadata(model_file).map_err(|e| Error::io(model_file, e))?;
    Ok(meta.len())
}

/// `batch_size` windows drawn by cycling through `pool`.
pub fn cycle_batch<'a>(pool: &[&'a [f64]], batch_size: usize) -> Result<Vec<&'a [f64]>> {
    if pool.is_empty() {
        return Err(Error::shape("no windows to benchmark on"));
    }
    Ok((0..batch_size).map(|i| pool[i % pool.len()]).collect())
}

/// Times `protocol.repetitions` predictions of the whole batch after
/// `protocol.warmup_batches` untimed ones.
pub fn measure_latency(
    model: &TrainedModel,
    batch: &[&[f64]],
    protocol: &BenchProtocol,
    memory_bytes: u64,
) -> Result<BenchResult> {
    protocol.validate()?;
    if batch.len() != protocol.batch_size {
        return Err(Error::shape(format!(
            "batch holds {} windows, protocol asks for {}",
            batch.len(),
            protocol.batch_size
        )));
    }
    for _ in 0..protocol.warmup_batches {
        std::hint::black_box(model.predict(batch)?);
    }
    let mut passes = Vec::with_capacity(protocol.repetitions);
    for _ in 0..protocol.repetitions {
        let start = Instant::now();
        std::hint::black_box(model.predict(std::hint::black_box(batch))?);
        let elapsed_ms = (start.elapsed().as_secs_f64() * 1e3).max(1e-9);
        passes.push(Pass {
            elapsed_ms,
            latency_ms: elapsed_ms / batch.len() as f64,
            throughput_per_ms: batch.len() as f64 / elapsed_ms,
        });
    }
    let (latency_ms_mean, latency_ms_std) = mean_std(&passes.iter().map(|p| p.latency_ms).collect::<Vec<_>>());
    let (throughput_per_ms_mean, throughput_per_ms_std) =
        mean_std(&passes.iter().map(|p| p.throughput_per_ms).collect::<Vec<_>>());
    Ok(BenchResult {
        model_id: model.kind.name().into(),
        path_id: model.path_id.clone(),
        memory_bytes,
        batch_size: batch.len(),
        latency_ms_mean,
        latency_ms_std,
        throughput_per_ms_mean,
        throughput_per_ms_std,
        passes,
    })
}

/// A model entered into a suite along with its held-out scores.
pub struct SuiteEntry<'a> {
    pub model: &'a TrainedModel,
    pub memory_bytes: u64,
    pub accuracy: f64,
    pub loc_score: f64,
}

/// One line of `bench_results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub model: String,
    pub path: String,
    pub accuracy: f64,
    pub loc_score: f64,
    pub memory_bytes: u64,
    pub latency_ms_mean: f64,
    pub latency_ms_std: f64,
    pub throughput_mean: f64,
    pub throughput_std: f64,
}

#[derive(Debug, Default)]
pub struct SuiteOutcome {
    pub rows: Vec<SuiteRow>,
    pub results: Vec<BenchResult>,
    /// Models that could not be benchmarked, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Benchmarks every entry on the same batch built from `pool`; entries whose
/// input shape does not fit are skipped and reported.
pub fn bench_suite(entries: &[SuiteEntry<'_>], pool: &[&[f64]], protocol: &BenchProtocol) -> Result<SuiteOutcome> {
    protocol.validate()?;
    let batch = cycle_batch(pool, protocol.batch_size)?;
    let mut out = SuiteOutcome::default();
    for e in entries {
        match measure_latency(e.model, &batch, protocol, e.memory_bytes) {
            Ok(r) => {
                out.rows.push(SuiteRow {
                    model: r.model_id.clone(),
                    path: r.path_id.clone(),
                    accuracy: e.accuracy,
                    loc_score: e.loc_score,
                    memory_bytes: r.memory_bytes,
                    latency_ms_mean: r.latency_ms_mean,
                    latency_ms_std: r.latency_ms_std,
                    throughput_mean: r.throughput_per_ms_mean,
                    throughput_std: r.throughput_per_ms_std,
                });
                out.results.push(r);
            }
            Err(err @ (Error::Shape(_) | Error::State(_))) => {
                out.skipped.push((e.model.kind.name().into(), err.to_string()));
            }
            Err(other) => return Err(other),
        }
    }
    Ok(out)
}

pub const RESULTS_FILE: &str = "bench_results.csv";
pub const PASSES_FILE: &str = "bench_passes.csv";
pub const PLOT_FILES: [&str; 3] = [
    "memory_vs_accuracy.csv",
    "latency_vs_accuracy.csv",
    "latency_vs_memory.csv",
];

fn writer(file: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(file).map_err(|e| csv_error(file, e))
}

pub fn write_results_csv(rows: &[SuiteRow], file: &Path) -> Result<()> {
    let mut w = writer(file)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(file, e))?;
    }
    if rows.is_empty() {
        w.write_record([
            "model",
            "path",
            "accuracy",
            "loc_score",
            "memory_bytes",
            "latency_ms_mean",
            "latency_ms_std",
            "throughput_mean",
            "throughput_std",
        ])
        .map_err(|e| csv_error(file, e))?;
    }
    w.flush().map_err(|e| Error::io(file, e))
}

pub fn read_results_csv(file: &Path) -> Result<Vec<SuiteRow>> {
    let mut r = csv::Reader::from_path(file).map_err(|e| csv_error(file, e))?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<SuiteRow>, _>>()
        .map_err(|e| Error::config("results", format!("{}: {e}", file.display())))?;
    Ok(rows)
}

pub fn write_passes_csv(results: &[BenchResult], file: &Path) -> Result<()> {
    let mut w = writer(file)?;
    w.write_record([
        "model",
        "path",
        "pass",
        "batch_size",
        "elapsed_ms",
        "latency_ms",
        "throughput_per_ms",
    ])
    .map_err(|e| csv_error(file, e))?;
    for r in results {
        for (i, p) in r.passes.iter().enumerate() {
            w.write_record([
                r.model_id.clone(),
                r.path_id.clone(),
                i.to_string(),
                r.batch_size.to_string(),
                p.elapsed_ms.to_string(),
                p.latency_ms.to_string(),
                p.throughput_per_ms.to_string(),
            ])
            .map_err(|e| csv_error(file, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(file, e))
}

/// The three scatter data sets, named after their x and y axes.
pub fn write_plot_csvs(rows: &[SuiteRow], dir: &Path) -> Result<()> {
    type Axes = fn(&SuiteRow) -> [f64; 2];
    let specs: [(&str, [&str; 2], Axes); 3] = [
        (PLOT_FILES[0], ["memory_mb", "accuracy"], |r| {
            [r.memory_bytes as f64 / 1e6, r.accuracy]
        }),
        (PLOT_FILES[1], ["latency_ms", "accuracy"], |r| {
            [r.latency_ms_mean, r.accuracy]
        }),
        (PLOT_FILES[2], ["latency_ms", "memory_mb"], |r| {
            [r.latency_ms_mean, r.memory_bytes as f64 / 1e6]
        }),
    ];
    for (name, axes, f) in specs.iter() {
        let file = dir.join(name);
        let mut w = writer(&file)?;
        w.write_record(["model", "path", axes[0], axes[1]])
            .map_err(|e| csv_error(&file, e))?;
        for r in rows {
            let [x, y] = f(r);
            w.write_record([r.model.clone(), r.path.clone(), x.to_string(), y.to_string()])
                .map_err(|e| csv_error(&file, e))?;
        }
        w.flush().map_err(|e| Error::io(&file, e))?;
    }
    Ok(())
}
