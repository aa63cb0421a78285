//! Gap filling, feature selection, min-max scaling and sliding windows.

use pathseg::dataset::imu_feature_names;
use pathseg::pathsim::{generate_runs, SimConfig};
use pathseg::preprocess::{clean_run, make_windows, max_gap, select_features, NormParams};

fn main() -> pathseg::Result<()> {
    let config = SimConfig {
        n_runs: 6,
        ..SimConfig::default()
    };
    let path = config.path_spec("path_1")?;
    let runs = generate_runs(&config, &path)?;
    for (name, column) in path.feature_names.iter().zip(&runs[0].columns).skip(9).take(2) {
        println!("{name}: longest gap {} samples before filling", max_gap(column));
    }
    let filled = clean_run(&runs[0])?;
    println!("temperature after filling: {:.3?}", &filled.columns[9][..6]);

    // the IMU-only view, as recorded on the third path
    let imu = imu_feature_names();
    let dense = runs
        .iter()
        .map(|r| clean_run(&select_features(r, &imu)?))
        .collect::<pathseg::Result<Vec<_>>>()?;

    let norm = NormParams::fit(&dense[..4])?;
    for (name, (lo, hi)) in norm.feature_names.iter().zip(norm.min.iter().zip(&norm.max)) {
        println!("{name:>8}: [{lo:+.3}, {hi:+.3}]");
    }
    let scaled = dense
        .iter()
        .map(|r| norm.apply(r))
        .collect::<pathseg::Result<Vec<_>>>()?;

    for j in [1, 10, 30] {
        let ds = make_windows(&scaled, j, path.n_segments())?;
        println!(
            "j = {j:>2}: {} windows of {} x {} values (first label {})",
            ds.len(),
            ds.j,
            ds.n,
            ds.labels[0]
        );
    }
    Ok(())
}
