//! The `pathseg` command line: generate → train → eval → bench → report.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bench::{self, BenchProtocol, SuiteEntry};
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_TAU;
use crate::model::{ModelKind, TrainedModel};
use crate::pathsim::FeatureSet;
use crate::pipeline::{self, ExperimentConfig};
use crate::report;

#[derive(Debug, Parser)]
#[command(name = "pathseg", version, about = "Segment-level indoor positioning benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate labelled sensor runs into a dataset directory.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// 1 and 2 record all 17 sensors, 3 only the 9 IMU channels.
        #[arg(long)]
        paths: Option<u8>,
    },
    /// Fit one model on the training runs of a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Restrict training to the feature set of this path number.
        #[arg(long)]
        paths: Option<u8>,
        /// Use the single-core desk-scale training profile.
        #[arg(long)]
        desk: bool,
        /// Window length (samples per input).
        #[arg(long)]
        window: Option<usize>,
    },
    /// Score a model on the test runs recorded in its envelope.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TAU, allow_negative_numbers = true)]
        tau: i64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Measure memory, latency and throughput of every model in a directory.
    Bench {
        /// A model file or a directory of `*.model` files.
        #[arg(long)]
        model: PathBuf,
        /// Dataset directories; each model runs on the one matching its path.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        batch: usize,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        #[arg(long, default_value_t = DEFAULT_TAU, allow_negative_numbers = true)]
        tau: i64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Render tables and scatter plots from bench results.
    Report {
        /// One or more `bench_results.csv` files.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

pub fn run_from<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::config("arguments", e.to_string()))?;
    run(cli)
}

fn models_in(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "model"))
        .collect();
    files.sort();
    Ok(files)
}

fn sibling(file: &Path, suffix: &str) -> PathBuf {
    let mut s = file.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

/// Executes one command and returns a short human-readable summary.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Generate {
            config,
            out,
            seed,
            paths,
        } => {
            let mut cfg = match config {
                Some(file) => ExperimentConfig::load(&file)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = seed {
                cfg.sim.seed = s;
            }
            if let Some(p) = paths {
                cfg.path = p;
            }
            let (path_id, features) = pipeline::path_for_number(cfg.path)?;
            if config_is_default_features(&cfg) {
                cfg.sim.feature_set = features;
            }
            let manifest = pipeline::generate_dataset(&cfg.sim, &path_id, &out)?;
            Ok(format!(
                "wrote {} runs of {path_id} to {}",
                manifest.runs.len(),
                out.display()
            ))
        }
        Command::Train {
            data,
            model,
            out,
            seed,
            config,
            epochs,
            paths,
            desk,
            window,
        } => {
            let kind: ModelKind = model.parse()?;
            let mut cfg = match config {
                Some(file) => ExperimentConfig::load(&file)?,
                None => ExperimentConfig::default(),
            };
            cfg.desk_scale |= desk;
            if let Some(e) = epochs {
                cfg.overrides.epochs = Some(e);
            }
            if let Some(j) = window {
                if j == 0 {
                    return Err(Error::config("window", "window length must be at least 1"));
                }
                cfg.j = j;
            }
            let (path, runs) = pipeline::load_dataset(&data)?;
            let features = match paths {
                Some(p) => {
                    let (_, set) = pipeline::path_for_number(p)?;
                    Some(set.feature_names())
                }
                None => None,
            };
            let prepared = pipeline::prepare(&path, &runs, &pipeline::split_for_seed(seed), features.as_deref())?;
            let (trained, log) = pipeline::train_model(kind, &prepared, cfg.j, seed, &cfg.overrides_for(kind))?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            trained.save(&out)?;
            pipeline::write_epoch_log(&log, &sibling(&out, ".log.csv"))?;
            Ok(format!(
                "trained {kind} (window {}) on {} runs → {}",
                cfg.j,
                prepared.train.len(),
                out.display()
            ))
        }
        Command::Eval { model, data, tau, out } => {
            if tau < 0 {
                return Err(Error::domain(format!("tau must be non-negative, got {tau}")));
            }
            let trained = TrainedModel::load(&model)?;
            let (path, runs) = pipeline::load_dataset(&data)?;
            let test = pipeline::test_runs_for(&trained, &path, &runs)?;
            let report = pipeline::evaluate_model(&trained, &test, tau)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let stem = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
            report.write_csv(&out.join(format!("metrics_{stem}.csv")))?;
            report.write_confusion_csv(&out.join(format!("confusion_{stem}.csv")))?;
            Ok(format!(
                "{}: accuracy {:.4}, loc-score {:.4} (tau {tau})",
                trained.kind, report.accuracy, report.loc_score
            ))
        }
        Command::Bench {
            model,
            data,
            batch,
            reps,
            warmup,
            tau,
            out,
        } => {
            let protocol = BenchProtocol {
                batch_size: batch,
                repetitions: reps,
                warmup_batches: warmup,
                single_threaded: true,
            };
            protocol.validate()?;
            let files = models_in(&model)?;
            let datasets = data
                .iter()
                .map(|d| pipeline::load_dataset(d))
                .collect::<Result<Vec<_>>>()?;
            let mut rows = Vec::new();
            let mut results = Vec::new();
            let mut skipped = Vec::new();
            for file in &files {
                let trained = TrainedModel::load(file)?;
                let memory = bench::memory_footprint(file)?;
                let Some((path, runs)) = datasets.iter().find(|(p, _)| p.path_id == trained.path_id) else {
                    skipped.push((
                        file.display().to_string(),
                        format!("no dataset for {}", trained.path_id),
                    ));
                    continue;
                };
                let prepared = match pipeline::test_runs_for(&trained, path, runs) {
                    Ok(t) => t,
                    Err(e) => {
                        skipped.push((file.display().to_string(), e.to_string()));
                        continue;
                    }
                };
                let metrics = pipeline::evaluate_model(&trained, &prepared, tau)?;
                let pool_ds = pipeline::windows(&prepared, trained.j, 1, trained.classes())?;
                let pool: Vec<&[f64]> = pool_ds.iter_windows().collect();
                let entry = SuiteEntry {
                    model: &trained,
                    memory_bytes: memory,
                    accuracy: metrics.accuracy,
                    loc_score: metrics.loc_score,
                };
                let outcome = bench::bench_suite(&[entry], &pool, &protocol)?;
                rows.extend(outcome.rows);
                results.extend(outcome.results);
                skipped.extend(outcome.skipped);
            }
            if rows.is_empty() {
                return Err(Error::shape(format!(
                    "no model could be benchmarked ({} skipped)",
                    skipped.len()
                )));
            }
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            bench::write_results_csv(&rows, &out.join(bench::RESULTS_FILE))?;
            bench::write_passes_csv(&results, &out.join(bench::PASSES_FILE))?;
            bench::write_plot_csvs(&rows, &out)?;
            let mut msg = format!(
                "benchmarked {} models → {}",
                rows.len(),
                out.join(bench::RESULTS_FILE).display()
            );
            for (m, why) in skipped {
                msg.push_str(&format!("\nskipped {m}: {why}"));
            }
            Ok(msg)
        }
        Command::Report { data, out } => {
            let mut rows = Vec::new();
            for file in &data {
                rows.extend(bench::read_results_csv(file)?);
            }
            let written = report::write_report(&rows, &out)?;
            Ok(format!("wrote {} report files to {}", written.len(), out.display()))
        }
    }
}

/// A config that never named a feature set follows the path number.
fn config_is_default_features(cfg: &ExperimentConfig) -> bool {
    cfg.sim.feature_set == FeatureSet::Full17
}
