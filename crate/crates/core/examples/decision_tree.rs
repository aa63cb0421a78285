//! Entropy decision tree on path 1, with the sensors it relies on most.

use pathseg::model::{Estimator, ModelKind};
use pathseg::pathsim::generate_runs;
use pathseg::pipeline::{benchmark_sim_config, desk_profile, evaluate_model, prepare, split_for_seed, train_model};

fn main() -> pathseg::Result<()> {
    let config = benchmark_sim_config();
    let path = config.path_spec("path_1")?;
    let runs = generate_runs(&config, &path)?;
    let data = prepare(&path, &runs, &split_for_seed(42), None)?;

    for j in [1, 30] {
        let (model, _) = train_model(ModelKind::Dt, &data, j, 42, &desk_profile(ModelKind::Dt))?;
        let report = evaluate_model(&model, &data.test, 24)?;
        if let Estimator::Tree { tree, .. } = &model.estimator {
            println!(
                "j = {j:>2}: depth {}, {} nodes, accuracy {:.4}, loc-score {:.4}",
                tree.root.depth(),
                tree.root.node_count(),
                report.accuracy,
                report.loc_score
            );
        }
        let mut sensors = model.sensor_importance()?;
        sensors.sort_by(|a, b| b.1.total_cmp(&a.1));
        for (name, w) in sensors.iter().take(5) {
            println!("    {name:<16} {w:.3}");
        }
    }
    Ok(())
}
