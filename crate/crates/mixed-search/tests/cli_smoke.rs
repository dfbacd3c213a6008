//! End-to-end runs of the binary at toy resolution: every subcommand, the
//! bundle cache, the JSON output mode, config-file layering, and failure
//! exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mixed-search"))
}

/// Toy-resolution flags shared by every invocation, plus a fixed model so
/// all subcommands hit the same bundle hash.
fn base_args(out: &Path) -> Vec<String> {
    [
        "--pi", "0.2", "--c", "0.02", "--snr-db", "6", "--seed", "9",
        "--grid-m", "21", "--quad-points", "33", "--loglr-points", "81",
        "--loglr-bound", "25",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain(["--out".to_string(), out.display().to_string()])
    .collect()
}

fn run(cmd: &str, out: &Path, extra: &[&str]) -> Output {
    let output = bin()
        .arg(cmd)
        .args(base_args(out))
        .args(extra)
        .output()
        .expect("binary should spawn");
    assert!(
        output.status.success(),
        "{cmd} {extra:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn stdout_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn every_subcommand_runs_and_leaves_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();

    // First solve computes; the repeat must hit the cache.
    let first = stdout_text(&run("solve", out, &[]));
    assert!(first.contains("solved in"), "first solve should compute: {first}");
    let again = stdout_text(&run("solve", out, &[]));
    assert!(again.contains("cache hit"), "second solve should reuse the bundle: {again}");
    let bundles: Vec<_> = std::fs::read_dir(out.join("bundles")).unwrap().collect();
    assert_eq!(bundles.len(), 1, "one hash, one bundle");
    assert!(out.join("config_solve.json").exists());

    // Region export writes the node tables.
    run("regions", out, &[]);
    for name in ["g.csv", "v_s.csv", "a_c.csv", "regions.csv"] {
        let path = out.join("exports").join(name);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().count() > 1, "{name} should have data rows");
    }

    // Simulation summary, human and machine readable.
    let sim = stdout_text(&run("simulate", out, &["--trials", "40", "--json"]));
    let sim_json: serde_json::Value = serde_json::from_str(&sim).expect("valid JSON summary");
    assert_eq!(sim_json["n_trials"].as_u64(), Some(40));
    assert!(out.join("simulate.json").exists());
    assert!(out.join("exports").join("trials.csv").exists());

    // Comparison against the calibrated baseline.
    let cmp = stdout_text(&run(
        "compare",
        out,
        &["--trials", "40", "--calib-trials", "40", "--json"],
    ));
    let cmp_json: serde_json::Value = serde_json::from_str(&cmp).expect("valid JSON report");
    assert!(cmp_json["mixed"]["mean_delay"].is_number());
    assert!(cmp_json["baseline"]["mean_delay"].is_number());
    assert!(out.join("compare.json").exists());

    // Two-point sweep.
    let sweep = stdout_text(&run(
        "sweep",
        out,
        &["--snr", "3,6", "--trials", "30", "--json"],
    ));
    let sweep_json: serde_json::Value = serde_json::from_str(&sweep).expect("valid JSON report");
    assert_eq!(sweep_json["points"].as_array().map(Vec::len), Some(2));
    assert!(out.join("sweep.json").exists());
    assert!(out.join("exports").join("sweep.csv").exists());
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let config = out.join("run.json");
    std::fs::write(&config, r#"{"pi": 0.3, "c": 0.05, "snr_db": 6}"#).unwrap();

    // --pi on the command line overrides the file; the file supplies c.
    let output = bin()
        .args([
            "solve", "--config", config.to_str().unwrap(), "--pi", "0.2",
            "--grid-m", "21", "--quad-points", "33", "--loglr-points", "81",
            "--loglr-bound", "25", "--json",
        ])
        .args(["--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let echo = std::fs::read_to_string(out.join("config_solve.json")).unwrap();
    let echo: serde_json::Value = serde_json::from_str(&echo).unwrap();
    assert_eq!(echo["params"]["pi"].as_f64(), Some(0.2));
    assert_eq!(echo["params"]["c"].as_f64(), Some(0.05));
}

#[test]
fn invalid_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap().to_string();

    // Unknown flag: clap usage error.
    let unknown = bin().args(["solve", "--no-such-flag", "--out", &out]).output().unwrap();
    assert!(!unknown.status.success());

    // Invalid model: pi outside (0, 1).
    let bad_pi = bin()
        .args([
            "solve", "--pi", "1.5", "--grid-m", "21", "--quad-points", "33",
            "--loglr-points", "81", "--loglr-bound", "25", "--out", &out,
        ])
        .output()
        .unwrap();
    assert!(!bad_pi.status.success());
    let msg = String::from_utf8_lossy(&bad_pi.stderr);
    assert!(msg.contains("pi"), "error should name the offending field: {msg}");
}
