use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hopper_core::harness::{self, RunConfig, TRAINING_HEADER};

// Zero policy, default model, 1 m drop: the hopper tips past 20° after this many steps.
const UNTRAINED_FALL_STEPS: u64 = 1490;

fn hopper(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hopper")).args(args).output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

const SMALL_TRAIN: &str = "
[env]
horizon_steps = 200
[ars]
num_directions = 2
top_directions = 2
iterations = 3
record_wall_clock = false
";

#[test]
fn train_writes_log_checkpoint_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_TRAIN);
    let out = dir.path().join("run");
    ok(hopper(&["train", "--config", &config, "--out", p(&out)]));

    let text = fs::read_to_string(out.join("training.csv")).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.ends_with('\n'));
    let rows = csv_rows(&out.join("training.csv"));
    assert_eq!(rows[0], TRAINING_HEADER);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3][0], "3");
    // 2 directions, two rollouts each, plus one evaluation per iteration
    assert_eq!(rows[3][1], "15");
    assert_eq!(rows[3][6], "0.0");
    for row in &rows[1..] {
        let mean: f64 = row[2].parse().unwrap();
        let min: f64 = row[3].parse().unwrap();
        let max: f64 = row[4].parse().unwrap();
        assert!(min <= mean && mean <= max);
        assert!(row[5].parse::<f64>().unwrap() <= 0.2);
    }
    assert!(out.join("policy.json").exists());

    // the resolved config reproduces the run byte for byte
    let resolved = RunConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(resolved.ars.iterations, 3);
    assert_eq!(resolved.experiment, harness::Experiment::Train);
    let again = dir.path().join("again");
    ok(hopper(&["train", "--config", p(&out.join("config.toml")), "--out", p(&again)]));
    assert_eq!(fs::read(out.join("training.csv")).unwrap(), fs::read(again.join("training.csv")).unwrap());
    assert_eq!(fs::read(out.join("policy.json")).unwrap(), fs::read(again.join("policy.json")).unwrap());
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_TRAIN);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(hopper(&["train", "--config", &config, "--out", p(&a), "--seed", "1"]));
    ok(hopper(&["train", "--config", &config, "--out", p(&b), "--seed", "2"]));
    assert_ne!(fs::read(a.join("policy.json")).unwrap(), fs::read(b.join("policy.json")).unwrap());
}

#[test]
fn zero_policy_sweeps_match_the_fall_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("zero.json");
    ok(hopper(&["zero-checkpoint", "--checkpoint", p(&ckpt)]));
    let oracle = UNTRAINED_FALL_STEPS as f64 / 1000.0;

    let out = dir.path().join("heights");
    ok(hopper(&["sweep-height", "--checkpoint", p(&ckpt), "--out", p(&out), "--heights", "1.0,0.5", "--repeats", "2"]));
    let rows = csv_rows(&out.join("sweep_height.csv"));
    assert_eq!(rows[0], ["height_m", "repeats", "mean_seconds", "min_seconds", "max_seconds", "success_count"]);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][0], "1.0");
    assert_eq!(rows[1][1], "2");
    for col in 2..5 {
        assert_eq!(rows[1][col].parse::<f64>().unwrap(), oracle);
    }
    assert_eq!(rows[1][5], "0");
    assert!(out.join("config.toml").exists());

    let out = dir.path().join("freq");
    ok(hopper(&["sweep-frequency", "--checkpoint", p(&ckpt), "--out", p(&out), "--intervals", "1,2,5", "--repeats", "1"]));
    let rows = csv_rows(&out.join("sweep_frequency.csv"));
    assert_eq!(rows[0][..3], ["frequency_hz", "decision_interval", "repeats"]);
    assert_eq!(rows[1][..2], ["1000.0", "1"]);
    assert_eq!(rows[2][..2], ["500.0", "2"]);
    assert_eq!(rows[3][..2], ["200.0", "5"]);
    // a zero action held longer is still a zero action
    for row in &rows[1..] {
        assert_eq!(row[3].parse::<f64>().unwrap(), oracle);
    }

    let out = dir.path().join("long");
    let stdout = ok(hopper(&["long-horizon", "--checkpoint", p(&ckpt), "--out", p(&out), "--duration", "600"]));
    assert!(stdout.contains("success=false"));
    let rows = csv_rows(&out.join("long_horizon.csv"));
    assert_eq!(rows[1], ["600.0", &oracle.to_string(), "0"]);

    let stdout = ok(hopper(&["long-horizon", "--checkpoint", p(&ckpt), "--out", p(&out), "--duration", "0"]));
    assert!(stdout.contains("survived 0s"));
}

#[test]
fn trajectory_export_has_one_row_per_surviving_step() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("zero.json");
    ok(hopper(&["zero-checkpoint", "--checkpoint", p(&ckpt)]));
    let out = dir.path().join("traj");
    ok(hopper(&["export-trajectory", "--checkpoint", p(&ckpt), "--out", p(&out)]));
    let rows = csv_rows(&out.join("trajectory.csv"));
    assert_eq!(rows[0].len(), 56);
    assert_eq!(rows[0][0], "time");
    assert_eq!(rows[0][55], "reward");
    // header + initial state + surviving steps
    assert_eq!(rows.len() as u64, UNTRAINED_FALL_STEPS + 2);
    assert_eq!(rows[1][0], "0.0");
    assert_eq!(rows[1][55], "0");
    assert!(rows[2..].iter().all(|r| r[55] == "1" && r.len() == 56));
    let last: f64 = rows.last().unwrap()[0].parse().unwrap();
    assert_eq!(last, UNTRAINED_FALL_STEPS as f64 / 1000.0);
    // leg bottom z starts at the drop height
    let z: f64 = rows[1][1 + 3 * 4 + 2].parse().unwrap();
    assert!((z - 1.0).abs() < 1e-12);
}

#[test]
fn invalid_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[ars]\nstep_sise = 0.1\n");
    let out = hopper(&["train", "--config", &bad, "--out", p(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step_sise"));

    let ckpt = dir.path().join("zero.json");
    ok(hopper(&["zero-checkpoint", "--checkpoint", p(&ckpt)]));
    let out = hopper(&["sweep-frequency", "--checkpoint", p(&ckpt), "--out", p(&dir.path().join("f")), "--intervals", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let out = hopper(&["sweep-height", "--checkpoint", p(&ckpt), "--out", p(&dir.path().join("h")), "--repeats", "0"]);
    assert_eq!(out.status.code(), Some(2));

    // a checkpoint trained on another model is refused
    let other = write_config(dir.path(), "[model]\ncable_stiffness = 700.0\n");
    let out = hopper(&["eval", "--config", &other, "--checkpoint", p(&ckpt), "--out", p(&dir.path().join("e"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"), "{}", String::from_utf8_lossy(&out.stderr));

    let missing = hopper(&["eval", "--checkpoint", p(&dir.path().join("none.json")), "--out", p(&dir.path().join("e"))]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn evaluation_settings_do_not_invalidate_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("zero.json");
    ok(hopper(&["zero-checkpoint", "--checkpoint", p(&ckpt)]));
    let config = write_config(dir.path(), "[env]\nhorizon_steps = 100\ndrop_height = 0.25\ndecision_interval = 3\n");
    let out = dir.path().join("e");
    let stdout = ok(hopper(&["eval", "--config", &config, "--checkpoint", p(&ckpt), "--out", p(&out), "--repeats", "1"]));
    assert!(stdout.contains("success=1/1"), "{stdout}");
}
