//! End-to-end tests of the `specdiff` binary: artifact formats, exit codes,
//! seeded determinism, and partial-output cleanup.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_specdiff"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .env_remove("SPECDIFF_OUT_DIR")
        .output()
        .expect("spawn specdiff")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

// Golden-file pipeline: simulate -> extract -> acf writes three
// artifacts, and rerunning with the same seed is byte-identical.
#[test]
fn pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = [
        "simulate", "--preset", "stable", "--seed", "7", "--frames", "200", "-o", "s.csv",
        "--trace-out", "t.csv",
    ];
    assert_ok(&run(&sim, d));
    assert_ok(&run(&["extract", "-i", "s.csv", "-o", "zpl.csv"], d));
    assert_ok(&run(&["acf", "-i", "zpl.csv", "--max-lag", "50", "-o", "acf.csv"], d));
    let first = (read(d, "s.csv"), read(d, "zpl.csv"), read(d, "acf.csv"));
    assert!(first.2.starts_with("lag,r,band\n"));

    let d2 = tempfile::tempdir().unwrap();
    assert_ok(&run(&sim, d2.path()));
    assert_eq!(first.0, read(d2.path(), "s.csv"), "same seed must be byte-identical");

    let d3 = tempfile::tempdir().unwrap();
    let sim_other = [
        "simulate", "--preset", "stable", "--seed", "8", "--frames", "200", "-o", "s.csv",
        "--trace-out", "t.csv",
    ];
    assert_ok(&run(&sim_other, d3.path()));
    assert_ne!(first.0, read(d3.path(), "s.csv"), "different seed must differ");
}

// Count formula: window 100 / stride 10 on 190 frames -> 10 rows.
#[test]
fn overlap_on_190_frames_gives_10_windows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_ok(&run(
        &["simulate", "--preset", "unstable", "--seed", "3", "--frames", "190", "-o", "s.csv"],
        d,
    ));
    assert_ok(&run(
        &["overlap", "-i", "s.csv", "--window", "100", "--stride", "10", "-o", "evo.csv"],
        d,
    ));
    let text = read(d, "evo.csv");
    assert_eq!(text.lines().count(), 11, "header + 10 windows");
}

// Horizon 8 on 500 us data spans 4 ms ahead of the last sample.
#[test]
fn forecast_rows_span_4ms() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_ok(&run(
        &[
            "simulate", "--preset", "stable", "--seed", "1", "--frames", "100", "-o", "s.csv",
            "--trace-out", "t.csv",
        ],
        d,
    ));
    assert_ok(&run(
        &["forecast", "-i", "t.csv", "--baseline", "linear", "--horizon", "8", "-o", "fc.csv"],
        d,
    ));
    let text = read(d, "fc.csv");
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    let t_of = |row: &str| row.split(',').nth(1).unwrap().parse::<f64>().unwrap();
    let t_last_history = 99.0 * 5e-4;
    let span = t_of(rows[7]) - t_last_history;
    assert!((span - 4e-3).abs() < 1e-12, "span {span}");
}

// Training is deterministic per seed: identical checkpoints byte-for-byte.
#[test]
fn train_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_ok(&run(
        &[
            "simulate", "--preset", "stable", "--seed", "11", "--frames", "150", "-o", "s.csv",
            "--trace-out", "t.csv",
        ],
        d,
    ));
    std::fs::write(
        d.join("hp.json"),
        r#"{"hidden_size":6,"sequence_length":6,"num_layers":1,"dropout":0.0,"learning_rate":0.003}"#,
    )
    .unwrap();
    let train = [
        "train", "-i", "t.csv", "--seed", "2", "--hp-config", "hp.json", "--max-epochs", "15",
        "-o", "model.json",
    ];
    assert_ok(&run(&train, d));
    let first = read(d, "model.json");
    std::fs::remove_file(d.join("model.json")).unwrap();
    assert_ok(&run(&train, d));
    assert_eq!(first, read(d, "model.json"));
}

// Exit codes: unknown subcommand 2, module validation failure 1.
#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(&["frobnicate"], d);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["acf", "-i", "missing.csv", "-o", "acf.csv"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

// Partial outputs are removed when a later stage of a subcommand fails.
#[test]
fn failed_run_leaves_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_ok(&run(
        &[
            "simulate", "--preset", "stable", "--seed", "5", "--frames", "120", "-o", "s.csv",
            "--trace-out", "t.csv",
        ],
        d,
    ));
    // The ACF CSV is written before the power-law fit; an out-of-range fit
    // region must fail the command *and* remove the already-written CSV.
    let out = run(
        &[
            "acf", "-i", "t.csv", "--max-lag", "50", "-o", "acf.csv", "--fit-out", "fit.json",
            "--fit-region", "60:70",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("acf.csv").exists(), "partial acf.csv not cleaned up");
    assert!(!d.join("fit.json").exists());
}

// Relative outputs resolve against SPECDIFF_OUT_DIR when set.
#[test]
fn out_dir_env_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let outdir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "--preset", "stable", "--seed", "4", "--frames", "80", "-o", "s.csv"])
        .current_dir(dir.path())
        .env("SPECDIFF_OUT_DIR", outdir.path())
        .output()
        .unwrap();
    assert_ok(&out);
    assert!(outdir.path().join("s.csv").exists());
    assert!(!dir.path().join("s.csv").exists());
}

// The evaluate subcommand writes the report JSON plus optional CSV tables.
#[test]
fn evaluate_writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_ok(&run(
        &[
            "simulate", "--preset", "stable", "--seed", "13", "--frames", "260", "-o", "s.csv",
            "--trace-out", "t.csv",
        ],
        d,
    ));
    std::fs::write(
        d.join("bench.json"),
        r#"{
  "models": ["linear", "sine"],
  "schemes": [{"train": 8, "val": 1, "test": 1}],
  "horizon": 8,
  "seed": 0,
  "hpo_trials": 0,
  "fixed_hp": {"hidden_size": 6, "sequence_length": 6, "num_layers": 1, "dropout": 0.0, "learning_rate": 0.003},
  "space": {"hidden_size": [4, 8], "sequence_length": [4, 8], "num_layers": [1, 1], "dropout": [0.0, 0.0], "log10_learning_rate": [-3.0, -2.0]},
  "max_epochs": 20,
  "patience": 10,
  "adapt": false
}"#,
    )
    .unwrap();
    assert_ok(&run(
        &[
            "evaluate", "-i", "t.csv", "--seed", "9", "--config", "bench.json", "-o",
            "report.json", "--cells-out", "cells.csv", "--mismatch-out", "mismatch.csv",
        ],
        d,
    ));
    let report = read(d, "report.json");
    assert!(report.contains("\"cells\""));
    let cells = read(d, "cells.csv");
    assert!(cells.starts_with("model,scheme,rmse_norm,rmse_nm\n"));
    assert_eq!(cells.lines().count(), 3, "2 models x 1 scheme + header");
    let mismatch = read(d, "mismatch.csv");
    assert!(mismatch.starts_with("step,actual_ghz,residual_ghz,factor\n"));
    assert_eq!(mismatch.lines().count(), 9, "8 steps + header");
}
