//! Simulates one path and writes it as a dataset directory.
//!
//! cargo run --release --example generate_traces -- [out_dir]

use std::path::PathBuf;

use pathseg::pathsim::{generate_runs, visit_order};
use pathseg::pipeline::{self, benchmark_sim_config};

fn main() -> pathseg::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pathseg_traces"));
    let config = benchmark_sim_config();
    let path = config.path_spec("path_1")?;
    let runs = generate_runs(&config, &path)?;

    println!("path {} with segments {:?}", path.path_id, path.segment_labels);
    println!(
        "visit order {:?}",
        visit_order(config.n_segments, config.include_return_journey)
    );
    for run in runs.iter().take(3) {
        let ambient = path.feature_names.iter().position(|f| f == "temperature").unwrap_or(0);
        let present = run.columns[ambient].iter().filter(|v| v.is_some()).count();
        println!(
            "{}: {} samples over {:.1} s, {} ambient readings",
            run.run_id,
            run.len(),
            run.timestamps.last().copied().unwrap_or(0.0),
            present
        );
    }

    let manifest = pipeline::generate_dataset(&config, "path_1", &out)?;
    println!("wrote {} runs to {}", manifest.runs.len(), out.display());
    Ok(())
}
