//! Trains one neural architecture and prints its epoch log.
//!
//! cargo run --release --example train_network -- [mlp|fcn|cnn1d|cnn2d|lstm|bilstm]

use pathseg::model::{Estimator, ModelKind};
use pathseg::pathsim::generate_runs;
use pathseg::pipeline::{benchmark_sim_config, desk_profile, evaluate_model, prepare, split_for_seed, train_model};

fn main() -> pathseg::Result<()> {
    let kind: ModelKind = std::env::args().nth(1).as_deref().unwrap_or("cnn1d").parse()?;
    if !kind.is_neural() {
        return Err(pathseg::Error::config("model", "pick one of the neural models"));
    }
    let config = benchmark_sim_config();
    let path = config.path_spec("path_1")?;
    let runs = generate_runs(&config, &path)?;
    let data = prepare(&path, &runs, &split_for_seed(42), None)?;

    let (model, log) = train_model(kind, &data, 30, 42, &desk_profile(kind))?;
    if let Estimator::Net(net) = &model.estimator {
        println!("{kind}: {} parameters", net.param_count());
        for layer in &net.spec.layers {
            println!("    {layer:?}");
        }
    }
    for e in &log {
        println!(
            "epoch {:>2}: loss {:.4} acc {:.4} | val loss {} acc {}",
            e.epoch,
            e.train_loss,
            e.train_accuracy,
            e.val_loss.map_or("-".into(), |v| format!("{v:.4}")),
            e.val_accuracy.map_or("-".into(), |v| format!("{v:.4}")),
        );
    }
    let report = evaluate_model(&model, &data.test, 24)?;
    println!(
        "test accuracy {:.4}, loc-score {:.4}",
        report.accuracy, report.loc_score
    );
    Ok(())
}
