//! End-to-end checks of the command-line interface.

use std::path::Path;
use std::process::Command;

fn agmec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_agmec"))
}

fn write_cfg(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    let text = format!(
        "mu_count=2\ngrid_side_cells=8\ncell_size_m=65\nchannels=2\npackets_per_task=4\n\
         arrival_prob=0.4\ndiscount=0.7\nreplay_capacity=64\nbatch_size=8\n\
         experiment_epochs=400\nlambda_grid=0,0.5\nchannel_grid=1,2\nbatch_grid=8\n{extra}"
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn temp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("agmec-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn simulate_writes_metrics_and_summary() {
    let dir = temp_dir("simulate");
    let cfg = write_cfg(&dir, "");
    let out = dir.join("out");
    let status = agmec()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--scheme", "greedy", "--epochs", "300", "--seed", "9", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("scheme: greedy"));
    assert!(summary.contains("seed: 9"));
}

#[test]
fn simulate_seed_determinism_across_processes() {
    let dir = temp_dir("determinism");
    let cfg = write_cfg(&dir, "");
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.join(format!("out{run}"));
        let status = agmec()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .args(["--scheme", "deeprl", "--epochs", "200", "--seed", "5", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn experiment_emits_sweep_files() {
    let dir = temp_dir("experiment");
    let cfg = write_cfg(&dir, "");
    let out = dir.join("lambda");
    let status = agmec()
        .args(["experiment", "--kind", "lambda", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let sweep = std::fs::read_to_string(out.join("lambda_sweep.csv")).unwrap();
    // header + 2 lambdas x 5 schemes
    assert_eq!(sweep.lines().count(), 11);
    assert!(out.join("summary.txt").exists());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = temp_dir("errors");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "no_such_key=1\n").unwrap();
    let out = agmec()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--scheme", "greedy", "--epochs", "10", "--seed", "1", "--out"])
        .arg(dir.join("x"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no_such_key"));

    let missing = agmec()
        .args(["simulate", "--config"])
        .arg(dir.join("absent.cfg"))
        .args(["--scheme", "greedy", "--epochs", "10", "--seed", "1", "--out"])
        .arg(dir.join("y"))
        .status()
        .unwrap();
    assert!(!missing.success());
}

#[test]
fn oracle_check_passes() {
    let out = agmec()
        .args(["oracle-check", "--steps", "200000"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("oracle-check: PASS"));
}
