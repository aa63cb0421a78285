//! Bagged forest against a single tree on the same windows.

use pathseg::model::{Estimator, ModelKind};
use pathseg::pathsim::generate_runs;
use pathseg::pipeline::{benchmark_sim_config, desk_profile, evaluate_model, prepare, split_for_seed, train_model};

fn main() -> pathseg::Result<()> {
    let config = benchmark_sim_config();
    let path = config.path_spec("path_2")?;
    let runs = generate_runs(&config, &path)?;
    let data = prepare(&path, &runs, &split_for_seed(7), None)?;

    for kind in [ModelKind::Dt, ModelKind::Rf] {
        let start = std::time::Instant::now();
        let (model, _) = train_model(kind, &data, 30, 7, &desk_profile(kind))?;
        let fit = start.elapsed();
        let report = evaluate_model(&model, &data.test, 24)?;
        let size = model.to_bytes()?.len();
        println!(
            "{kind}: fit {fit:.1?}, {size} bytes, accuracy {:.4}, loc-score {:.4}",
            report.accuracy, report.loc_score
        );
        if let Estimator::Forest { forest, params } = &model.estimator {
            println!(
                "    {} trees, {} features tried per split, bootstrap {}",
                forest.trees.len(),
                forest.feature_subsample_size,
                params.bootstrap
            );
        }
    }
    Ok(())
}
