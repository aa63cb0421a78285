//! Memory, latency and throughput of a few quick models on one batch.

use pathseg::bench::{bench_suite, BenchProtocol, SuiteEntry};
use pathseg::model::ModelKind;
use pathseg::pathsim::generate_runs;
use pathseg::pipeline::{
    benchmark_sim_config, desk_profile, evaluate_model, prepare, split_for_seed, train_model, windows,
};

fn main() -> pathseg::Result<()> {
    let config = benchmark_sim_config();
    let path = config.path_spec("path_1")?;
    let runs = generate_runs(&config, &path)?;
    let data = prepare(&path, &runs, &split_for_seed(42), None)?;

    let mut models = Vec::new();
    for kind in [ModelKind::Dt, ModelKind::Mlp, ModelKind::Cnn1d] {
        let (model, _) = train_model(kind, &data, 30, 42, &desk_profile(kind))?;
        let report = evaluate_model(&model, &data.test, 24)?;
        let bytes = model.to_bytes()?.len() as u64;
        models.push((model, report, bytes));
    }
    let entries: Vec<SuiteEntry<'_>> = models
        .iter()
        .map(|(model, report, bytes)| SuiteEntry {
            model,
            memory_bytes: *bytes,
            accuracy: report.accuracy,
            loc_score: report.loc_score,
        })
        .collect();

    let pool_ds = windows(&data.test, 30, 1, data.class_count())?;
    let pool: Vec<&[f64]> = pool_ds.iter_windows().collect();
    let protocol = BenchProtocol {
        batch_size: 5_000,
        repetitions: 5,
        ..BenchProtocol::default()
    };
    let outcome = bench_suite(&entries, &pool, &protocol)?;
    println!(
        "{:<6} {:>10} {:>14} {:>14} {:>8}",
        "model", "bytes", "latency ms", "per ms", "acc"
    );
    for r in &outcome.rows {
        println!(
            "{:<6} {:>10} {:>14.3e} {:>14.1} {:>8.4}",
            r.model, r.memory_bytes, r.latency_ms_mean, r.throughput_mean, r.accuracy
        );
    }
    Ok(())
}
