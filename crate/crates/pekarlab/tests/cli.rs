//! Exit-code and artifact contract of the command-line binary.
//!
//! Covers: exit 0 with a full artifact set on success, exit 2 with artifacts
//! on non-convergence, exit 1 with a diagnostic naming the offending key on
//! config errors, and byte-identical reports for identical config + seed.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pekarlab")
}

/// Fresh scratch directory under the target tmp dir, named per test.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join("pekarlab-cli-tests")
        .join(format!("{name}-{}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_cfg(dir: &PathBuf, text: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("PEKARLAB_JOBS")
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SOLVE_SMALL: &str = "\
[grid]
n = 10
spacing = 1.2

[run]
n = 1
alpha = 0.8

[scf]
mixing = 1.0
outer_tol = 1e-6
max_outer = 80
grad_tol = 1e-5
max_inner = 2000
";

#[test]
fn solve_exits_zero_and_writes_the_artifact_set() {
    let dir = scratch("solve-ok");
    let cfg = write_cfg(&dir, SOLVE_SMALL);
    let out_dir = dir.join("out");
    let out = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "expected exit 0, got {:?}; stderr: {}",
        out.status.code(),
        stderr_of(&out)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["task"], "solve");
    assert_eq!(report["converged"], true);
    assert!(report["version"].is_string());
    assert!(report["config_echo"].is_object());
    assert!(report["results"]["scf"]["energy"].is_f64());
    for artifact in ["energy_trace.csv", "density_profile.csv", "density_profile.gp"] {
        assert!(out_dir.join(artifact).exists(), "missing {artifact}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("solve:"), "summary line missing: {stdout}");
}

#[test]
fn unknown_key_is_a_usage_error_naming_it() {
    let dir = scratch("bad-key");
    let cfg = write_cfg(
        &dir,
        "[grid]\nn = 10\nspacing = 1.0\n\n[scf]\nmixng = 0.7\n",
    );
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("mixng"), "diagnostic must name the key: {err}");
}

#[test]
fn random_starts_without_seed_are_rejected() {
    let dir = scratch("no-seed");
    let cfg = write_cfg(
        &dir,
        "[grid]\nn = 10\nspacing = 1.0\n\n[run]\nstarts = spread,random\n",
    );
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("seed"), "diagnostic must mention the seed: {err}");
}

#[test]
fn task_mismatch_between_file_and_argument_is_rejected() {
    let dir = scratch("task-mismatch");
    let cfg = write_cfg(
        &dir,
        "[grid]\nn = 10\nspacing = 1.0\n\n[run]\ntask = solve\n",
    );
    let out = run(&["binding", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(
        err.contains("task") && err.contains("solve"),
        "diagnostic must show the mismatch: {err}"
    );
}

#[test]
fn unparseable_jobs_env_is_a_usage_error() {
    let dir = scratch("bad-jobs");
    let cfg = write_cfg(&dir, SOLVE_SMALL);
    let out = Command::new(bin())
        .args(["solve", "--config", cfg.to_str().unwrap()])
        .env("PEKARLAB_JOBS", "many")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("PEKARLAB_JOBS"), "diagnostic: {err}");
}

#[test]
fn nonconvergence_exits_two_and_still_writes_artifacts() {
    let dir = scratch("no-conv");
    // Starved inner budget with an unreachable gradient tolerance.
    let cfg = write_cfg(
        &dir,
        "\
[grid]
n = 10
spacing = 1.2

[run]
n = 1
alpha = 0.8

[scf]
grad_tol = 1e-14
max_inner = 3
max_outer = 2
",
    );
    let out_dir = dir.join("out");
    let out = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], false);
    assert!(out_dir.join("energy_trace.csv").exists());
}

#[test]
fn identical_config_and_seed_give_byte_identical_reports() {
    let dir = scratch("determinism");
    // Random starts exercise the seeded path end to end.
    let cfg = write_cfg(
        &dir,
        "\
[grid]
n = 10
spacing = 1.2

[run]
n = 1
alpha = 0.8
starts = spread,random
seed = 42

[scf]
grad_tol = 1e-5
max_inner = 1500
max_outer = 60
",
    );
    let out_dir = dir.join("out");
    let args = [
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ];
    let first = run(&args);
    assert!(first.status.success(), "stderr: {}", stderr_of(&first));
    let bytes_first = fs::read(out_dir.join("report.json")).unwrap();
    let trace_first = fs::read(out_dir.join("energy_trace.csv")).unwrap();

    let second = run(&args);
    assert!(second.status.success(), "stderr: {}", stderr_of(&second));
    let bytes_second = fs::read(out_dir.join("report.json")).unwrap();
    let trace_second = fs::read(out_dir.join("energy_trace.csv")).unwrap();

    assert_eq!(bytes_first, bytes_second, "report.json must be byte-stable");
    assert_eq!(trace_first, trace_second, "tables must be byte-stable");
}

#[test]
fn trivial_partition_check_reports_machine_floor_residual() {
    let dir = scratch("ims-trivial");
    // 24^3 at h = 0.55: half side 6.6, partition support ends at 1.1 + 4/0.75.
    let cfg = write_cfg(
        &dir,
        "\
[grid]
n = 24
spacing = 0.55

[run]
n = 2
alpha = 0.6

[ims]
epsilon = 0.75
r_eps = 1.1
trivial = true
",
    );
    let out_dir = dir.join("out");
    let out = run(&[
        "ims-check",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let rel = report["results"]["relative_residual"].as_f64().unwrap();
    assert!(
        rel <= 1e-12,
        "localization identity should sit at the machine floor, got {rel}"
    );
    let pointwise = report["results"]["pointwise_identity_max"]
        .as_f64()
        .unwrap();
    assert!(pointwise <= 1e-12);
}
