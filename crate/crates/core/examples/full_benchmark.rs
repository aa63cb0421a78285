//! Every model on every path, then the comparison tables and plots.
//! Takes tens of minutes on one core.
//!
//! cargo run --release --example full_benchmark -- [out_dir] [paths, e.g. 1,2,3]

use std::path::PathBuf;

use pathseg::bench::{self, bench_suite, BenchProtocol, SuiteEntry};
use pathseg::model::ModelKind;
use pathseg::pipeline::{
    self, benchmark_sim_config, desk_profile, evaluate_model, prepare, split_for_seed, train_model,
};
use pathseg::report::write_report;

fn main() -> pathseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pathseg_full"));
    let numbers: Vec<u8> = args
        .next()
        .unwrap_or_else(|| "1,2,3".into())
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| pathseg::Error::config("paths", format!("bad path `{s}`")))
        })
        .collect::<pathseg::Result<_>>()?;
    let protocol = BenchProtocol::default();

    let mut rows = Vec::new();
    let mut results = Vec::new();
    for number in numbers {
        let (path_id, features) = pipeline::path_for_number(number)?;
        let mut config = benchmark_sim_config();
        config.feature_set = features;
        config.seed += number as u64;
        let data_dir = out.join(&path_id).join("data");
        pipeline::generate_dataset(&config, &path_id, &data_dir)?;
        let (path, runs) = pipeline::load_dataset(&data_dir)?;
        let data = prepare(&path, &runs, &split_for_seed(42), None)?;
        let pool_ds = pipeline::windows(&data.test, 30, 1, data.class_count())?;
        let pool: Vec<&[f64]> = pool_ds.iter_windows().collect();

        for kind in ModelKind::ALL {
            let start = std::time::Instant::now();
            let (model, _) = train_model(kind, &data, 30, 42, &desk_profile(kind))?;
            let file = pipeline::model_file(&out.join(&path_id), kind);
            model.save(&file)?;
            let report = evaluate_model(&model, &data.test, 24)?;
            let entry = SuiteEntry {
                model: &model,
                memory_bytes: bench::memory_footprint(&file)?,
                accuracy: report.accuracy,
                loc_score: report.loc_score,
            };
            let outcome = bench_suite(&[entry], &pool, &protocol)?;
            println!(
                "{path_id} {kind:<6} trained in {:>6.1?}  accuracy {:.4}  loc {:.4}",
                start.elapsed(),
                report.accuracy,
                report.loc_score
            );
            rows.extend(outcome.rows);
            results.extend(outcome.results);
        }
    }
    bench::write_results_csv(&rows, &out.join(bench::RESULTS_FILE))?;
    bench::write_passes_csv(&results, &out.join(bench::PASSES_FILE))?;
    bench::write_plot_csvs(&rows, &out)?;
    let written = write_report(&rows, &out.join("report"))?;
    println!("{} report files under {}", written.len(), out.join("report").display());
    Ok(())
}
