//! End-to-end checks of the command-line interface: exit-code contract,
//! trace emission and byte determinism, audit behaviour, checkpoints.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polykinetic"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("polykinetic_cli_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn selftest_exits_zero() {
    let out = bin().arg("selftest").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("all invariants hold"));
}

#[test]
fn missing_config_is_a_config_error() {
    let out = bin().args(["run", "definitely-missing-file.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_reports_line_and_exits_two() {
    let dir = tmp_dir("badcfg");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "[physical]\nnu = -1\n").unwrap();
    let out = bin().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nu"), "{err}");
}

#[test]
fn unknown_scenario_exits_two() {
    let out = bin().args(["scenario", "no-such-thing"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenario_writes_csv_and_rerun_is_byte_identical() {
    let dir = tmp_dir("scenario");
    let run = |sub: &str| {
        let out = bin()
            .args(["scenario", "equilibrium", "--output-dir"])
            .arg(dir.join(sub).to_str().unwrap())
            .arg("--log-level")
            .arg("quiet")
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.join(sub).join("equilibrium_trace.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b, "traces are not byte-identical");
    // Header plus one row per step.
    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() > 2);
    assert!(lines[0].starts_with("t,kinetic_energy,relative_entropy"));
    for row in &lines[1..] {
        assert_eq!(row.split(',').count(), 13);
    }
    assert!(text.ends_with('\n'));
}

#[test]
fn audit_passes_on_fresh_trace_and_fails_on_corruption() {
    let dir = tmp_dir("audit");
    let out = bin()
        .args(["scenario", "equilibrium", "--output-dir"])
        .arg(dir.to_str().unwrap())
        .arg("--log-level")
        .arg("quiet")
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = dir.join("equilibrium_trace.csv");
    let ok = bin().args(["audit", csv.to_str().unwrap()]).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));

    // Corrupt the budget-slack column of one row.
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(|s| s.to_string()).collect();
    let mut cols: Vec<String> = lines[2].split(',').map(|s| s.to_string()).collect();
    cols[10] = "-1.0e0".into();
    lines[2] = cols.join(",");
    let bad = dir.join("corrupt.csv");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let fail = bin().args(["audit", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(fail.status.code(), Some(4));
    let stdout = String::from_utf8_lossy(&fail.stdout);
    assert!(stdout.contains("slack"), "{stdout}");
}

#[test]
fn run_from_config_file_with_checkpoint() {
    let dir = tmp_dir("runcfg");
    let cfg_path = dir.join("small.cfg");
    std::fs::write(
        &cfg_path,
        "\
[physical]
epsilon = 0.5
k = 0.5
t_final = 0.1

[cutoff]
cutoff_l = 12

[resolution]
x_modes = 8
q_degree = 4

[initial]
u0 = taylor_green 0.1
psi0 = squared 1 1 0 0.2
",
    )
    .unwrap();
    let out = bin()
        .args(["run", cfg_path.to_str().unwrap(), "--output-dir"])
        .arg(dir.to_str().unwrap())
        .args(["--checkpoint-every", "1", "--log-level", "quiet"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.join("small_trace.csv");
    assert!(csv.exists());
    let ckpt = dir.join("small_final.ckpt");
    assert!(ckpt.exists());
    // The checkpoint audits clean.
    let ok = bin().args(["audit", ckpt.to_str().unwrap()]).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    // And the trace audits clean too.
    let ok2 = bin().args(["audit", csv.to_str().unwrap()]).output().unwrap();
    assert!(ok2.status.success());
}

#[test]
fn traces_are_identical_across_thread_counts() {
    let dir = tmp_dir("threads");
    let run = |threads: &str, sub: &str| {
        let out = bin()
            .args(["scenario", "equilibrium", "--output-dir"])
            .arg(dir.join(sub).to_str().unwrap())
            .args(["--log-level", "quiet"])
            .env("POLYKINETIC_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.join(sub).join("equilibrium_trace.csv")).unwrap()
    };
    let one = run("1", "t1");
    let two = run("2", "t2");
    assert_eq!(one, two, "traces differ between 1 and 2 worker threads");
}

#[test]
fn diverging_run_exits_three_with_failure_checkpoint() {
    let dir = tmp_dir("blowup");
    let cfg = dir.join("blowup.cfg");
    std::fs::write(
        &cfg,
        "[physical]
nu = 0.001
k = 8.0
lambda = 5.0
epsilon = 0.01
t_final = 2.0

[cutoff]
cutoff_l = 2.0
dt_override = 2.0

[resolution]
x_modes = 4
q_degree = 2

[initial]
u0 = taylor_green 6.0
psi0 = squared 1 1 0 0.9
",
    )
    .unwrap();
    let out = bin()
        .args(["run", cfg.to_str().unwrap(), "--output-dir"])
        .arg(dir.to_str().unwrap())
        .args(["--log-level", "quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    // The last good state (the initial one here) was checkpointed.
    let ckpt = dir.join("last_good_state.ckpt");
    assert!(ckpt.exists());
    let ok = bin().args(["audit", ckpt.to_str().unwrap()]).output().unwrap();
    assert!(ok.status.success());
}

#[test]
fn cadence_thins_rows() {
    let dir = tmp_dir("cadence");
    let out = bin()
        .args(["scenario", "equilibrium", "--output-dir"])
        .arg(dir.to_str().unwrap())
        .args(["--cadence", "3", "--log-level", "quiet"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.join("equilibrium_trace.csv")).unwrap();
    let rows = text.lines().count() - 1;
    // 12 steps at cadence 3 plus the guaranteed final row.
    assert_eq!(rows, 4);
    let _ = Path::new("x");
}
