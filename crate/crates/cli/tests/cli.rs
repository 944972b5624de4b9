//! End-to-end checks of the binary: exit codes, file outputs, determinism
//! across worker counts, and the verdict schema.

use std::path::Path;
use std::process::Command;

use dthawkes::simulate::simulate_ensemble;
use dthawkes_cli::config::{Overrides, RunConfig};
use dthawkes_cli::output::write_terminal_csv;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dthawkes"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.conf");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_PRESET: &str = "\
model.nu = 0.1
model.kernel = geometric(0.05, 0.5)
model.marks = exponential(0.3)
simulation.horizon = 500
simulation.n_paths = 400
simulation.master_seed = 9
";

#[test]
fn missing_config_flag_is_a_config_error() {
    let status = binary().arg("limits").status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "model.nuu = 0.1\n");
    let output = binary()
        .args(["limits", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 1"), "stderr: {stderr}");
}

#[test]
fn unstable_model_exits_with_assumption_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "model.nu = 0.1\nmodel.kernel = geometric(0.5, 0.5)\nmodel.marks = constant(1)\n",
    );
    let output = binary()
        .args(["limits", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("branching ratio"), "stderr: {stderr}");
}

#[test]
fn seol_budget_violation_exits_with_assumption_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "model.kernel = table(0.6)\nseol.alpha0 = 0.5\n\
         simulation.horizon = 10\nsimulation.n_paths = 4\nsimulation.master_seed = 1\n",
    );
    let status = binary()
        .args(["seol", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn verify_passes_and_emits_schema_stable_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "model.nu = 0.5\nmodel.kernel = zero\nmodel.marks = constant(1)\n\
         simulation.horizon = 800\nsimulation.n_paths = 500\nsimulation.master_seed = 5\n",
    );
    let out = dir.path().join("out");
    let status = binary()
        .args(["verify", "--no-timestamp", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let verdict: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(verdict["command"], "verify");
    assert_eq!(verdict["pass"], true);
    assert!(verdict.get("timestamp").is_none());
    assert!(verdict["config_hash"].as_str().unwrap().len() == 64);
    for check in verdict["checks"].as_array().unwrap() {
        assert!(check["name"].is_string());
        assert!(check["statistic"].is_number());
        assert!(check["threshold"].is_number());
        assert!(check["pass"].is_boolean());
    }
    assert!(out.join("summary.csv").exists());
}

#[test]
fn wrong_variance_override_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "model.nu = 0.1\nmodel.kernel = geometric(0.05, 0.5)\nmodel.marks = exponential(0.3)\n\
         simulation.horizon = 2000\nsimulation.n_paths = 2000\nsimulation.master_seed = 42\n\
         verification.checks = clt\n",
    );
    let status = binary()
        .args(["verify", "--sigma2-counts", "0.8", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn simulate_writes_deterministic_csv_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let config_text = format!("{SMALL_PRESET}simulation.record_mode = full_series\n");
    let config = write_config(dir.path(), &config_text);
    for (out, workers) in [("a", "1"), ("b", "3")] {
        let status = binary()
            .args(["simulate", "--workers", workers, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    let a = std::fs::read(dir.path().join("a/terminal.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/terminal.csv")).unwrap();
    assert_eq!(a, b);

    let series = std::fs::read_to_string(dir.path().join("a/series/path_017.csv")).unwrap();
    let mut lines = series.lines();
    assert_eq!(lines.next(), Some("t,lambda,Z,X,N_cum,L_cum"));
    assert_eq!(lines.count(), 500);
    assert!(!series.contains('\r'));
}

#[test]
fn terminal_csv_matches_library_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig::from_str_and_overrides(SMALL_PRESET, &Overrides::default()).unwrap();
    let params = config.model_params().unwrap();
    let sim = config.simulation_config().unwrap();
    let ensemble = simulate_ensemble(&params, &sim);
    let lib_path = dir.path().join("lib.csv");
    write_terminal_csv(&lib_path, &ensemble).unwrap();

    let config_file = write_config(dir.path(), SMALL_PRESET);
    let status = binary()
        .args(["simulate", "--config"])
        .arg(&config_file)
        .arg("--out")
        .arg(dir.path().join("cli"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(
        std::fs::read(lib_path).unwrap(),
        std::fs::read(dir.path().join("cli/terminal.csv")).unwrap()
    );
}

#[test]
fn seed_flag_changes_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_PRESET);
    for (out, seed) in [("s9", "9"), ("s10", "10")] {
        binary()
            .args(["simulate", "--seed", seed, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
    }
    let a = std::fs::read(dir.path().join("s9/terminal.csv")).unwrap();
    let b = std::fs::read(dir.path().join("s10/terminal.csv")).unwrap();
    assert_ne!(a, b);
}
