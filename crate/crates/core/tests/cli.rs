use std::path::Path;
use std::process::{Command, Output};

fn pathseg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathseg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(out: Output) -> Output {
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const SMALL: &str = "[sim]\nseed = 11\nn_segments = 4\nn_runs = 5\nsegment_duration_range = [1.0, 2.0]\n";

#[test]
fn full_chain_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("small.toml"), SMALL).unwrap();
    std::fs::write(dir.join("bad.toml"), SMALL.replace("n_segments = 4", "n_segments = 1")).unwrap();

    ok(pathseg(&["generate", "--config", "small.toml", "--out", "data"], dir));
    assert!(dir.join("data/manifest.json").exists());
    let first = std::fs::read(dir.join("data/manifest.json")).unwrap();
    ok(pathseg(&["generate", "--config", "small.toml", "--out", "again"], dir));
    assert_eq!(first, std::fs::read(dir.join("again/manifest.json")).unwrap());

    std::fs::write(dir.join("typo.toml"), SMALL.replace("n_runs", "n_rnus")).unwrap();
    let typo = pathseg(&["generate", "--config", "typo.toml", "--out", "x"], dir);
    assert_eq!(code(&typo), 2);
    assert!(String::from_utf8_lossy(&typo.stderr).contains("n_rnus"));

    let bad = pathseg(&["generate", "--config", "bad.toml", "--out", "x"], dir);
    assert_eq!(code(&bad), 2);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("n_segments"));

    ok(pathseg(
        &[
            "train",
            "--data",
            "data",
            "--model",
            "dt",
            "--seed",
            "7",
            "--window",
            "5",
            "--out",
            "m/dt.model",
        ],
        dir,
    ));
    let envelope = std::fs::read(dir.join("m/dt.model")).unwrap();
    let header = envelope.split(|&b| b == b'\n').nth(1).unwrap();
    assert!(String::from_utf8_lossy(header).contains("\"seed\":7"));

    ok(pathseg(
        &[
            "train",
            "--data",
            "data",
            "--model",
            "mlp",
            "--window",
            "5",
            "--desk",
            "--epochs",
            "1",
            "--out",
            "m/mlp.model",
        ],
        dir,
    ));
    let log = std::fs::read_to_string(dir.join("m/mlp.model.log.csv")).unwrap();
    assert_eq!(log.lines().count(), 2, "{log}");
    assert_eq!(
        code(&pathseg(
            &["train", "--data", "data", "--model", "svm", "--out", "m/x"],
            dir
        )),
        2
    );

    ok(pathseg(
        &[
            "eval",
            "--model",
            "m/dt.model",
            "--data",
            "data",
            "--tau",
            "0",
            "--out",
            "e",
        ],
        dir,
    ));
    let metrics = std::fs::read_to_string(dir.join("e/metrics_dt.csv")).unwrap();
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], row[3], "accuracy and loc-score at tau 0");
    assert!(dir.join("e/confusion_dt.csv").exists());
    assert_eq!(
        code(&pathseg(&["eval", "--model", "m/none.model", "--data", "data"], dir)),
        4
    );

    std::fs::write(dir.join("imu.toml"), format!("path = 3\n{SMALL}")).unwrap();
    ok(pathseg(&["generate", "--config", "imu.toml", "--out", "imu"], dir));
    assert_eq!(
        code(&pathseg(&["eval", "--model", "m/dt.model", "--data", "imu"], dir)),
        4
    );

    let bench = [
        "bench", "--model", "m", "--data", "data", "--batch", "500", "--reps", "3", "--out", "b",
    ];
    ok(pathseg(&bench, dir));
    let results = std::fs::read_to_string(dir.join("b/bench_results.csv")).unwrap();
    assert_eq!(results.lines().count(), 3);
    let memory = |text: &str| {
        text.lines()
            .skip(1)
            .map(|l| l.split(',').nth(4).unwrap().to_string())
            .collect::<Vec<_>>()
    };
    ok(pathseg(&bench, dir));
    assert_eq!(
        memory(&results),
        memory(&std::fs::read_to_string(dir.join("b/bench_results.csv")).unwrap())
    );
    let mut one_rep = bench.to_vec();
    one_rep[8] = "1";
    assert_eq!(code(&pathseg(&one_rep, dir)), 2);

    ok(pathseg(&["report", "--data", "b/bench_results.csv", "--out", "r"], dir));
    let files: Vec<String> = std::fs::read_dir(dir.join("r"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(files.iter().filter(|f| f.ends_with(".md")).count(), 5);
    assert_eq!(files.iter().filter(|f| f.ends_with(".svg")).count(), 3);

    std::fs::write(dir.join("empty.csv"), "").unwrap();
    std::fs::write(dir.join("broken.csv"), "model,path\ndt\n").unwrap();
    assert_eq!(
        code(&pathseg(&["report", "--data", "empty.csv", "--out", "r2"], dir)),
        2
    );
    assert_eq!(
        code(&pathseg(&["report", "--data", "broken.csv", "--out", "r2"], dir)),
        2
    );
    assert_eq!(
        code(&pathseg(
            &["eval", "--model", "m/dt.model", "--data", "data", "--tau", "-3"],
            dir
        )),
        3
    );
}
