//! End-to-end command-line runs against real files: artifact layout,
//! reproducibility, environment fallbacks and failure exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use neurolan::cli::run;

fn write_config(dir: &Path, name: &str, experiment: &str) -> PathBuf {
    let text = format!(
        r#"{{
            "seed": 31,
            "model": {{
                "drift": {{"type": "linear", "decay": 1.0, "input": 0.3}},
                "reset": {{"type": "to_zero"}},
                "mark_law": {{"type": "uniform", "min": 0.0, "max": 0.5}},
                "initial_law": {{"type": "uniform", "min": 0.0, "max": 1.0}},
                "rate": {{"family": "affine_sigmoid", "center": 0.4, "scale": 0.1}},
                "theta_box": {{"lower": [0.05, 0.02], "upper": [1.0, 1.0]}}
            }},
            "experiment": {experiment}
        }}"#
    );
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn small_lan() -> &'static str {
    r#"{
        "kind": "lan",
        "theta_star": [0.4, 0.3],
        "h": [[0.6, 0.8]],
        "n_grid": [16, 128],
        "replicates": 24,
        "horizon": 0.3,
        "reference_particles": 2000
    }"#
}

#[test]
fn lan_run_writes_the_full_artifact_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lan.json", small_lan());
    let out = dir.path().join("out");
    let code = run([
        "neurolan",
        "lan",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "1",
    ]);
    assert_eq!(code, 0);

    let rows = fs::read_to_string(out.join("rows.csv")).unwrap();
    let header = rows.lines().next().unwrap();
    assert!(header.starts_with("n,h_index,replicate,events"), "{header}");
    // grid of 2 sizes x 24 replicates x 1 direction
    assert_eq!(rows.lines().count() - 1, 48);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "lan");
    assert!(summary["summary"]["per_n"].as_array().unwrap().len() == 2);
    assert!(summary["verdicts"].as_array().is_some());
    assert!(summary["wall_clock_seconds"].as_f64().unwrap() >= 0.0);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    for key in ["command", "config_path", "config_sha256", "code_version", "seed", "rows_sha256"] {
        assert!(!manifest[key].is_null(), "manifest is missing {key}");
    }
    assert!(!out.join("record.jsonl").exists(), "only simulate writes records");
}

#[test]
fn identical_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lan.json", small_lan());
    let mut rows = Vec::new();
    let mut manifests = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let code = run([
            "neurolan",
            "lan",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            "2",
        ]);
        assert_eq!(code, 0);
        rows.push(fs::read(out.join("rows.csv")).unwrap());
        manifests.push(fs::read(out.join("manifest.json")).unwrap());
    }
    assert_eq!(rows[0], rows[1], "rows.csv must not depend on the run");
    assert_eq!(manifests[0], manifests[1], "manifest must not depend on the run");
}

#[test]
fn jobs_environment_variable_is_a_fallback() {
    // The only test in this binary that touches the variable; every other
    // run passes --jobs explicitly, which bypasses the environment.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lan.json", small_lan());
    let out = dir.path().join("env");
    std::env::set_var("NEUROLAN_JOBS", "2");
    let code = run([
        "neurolan",
        "lan",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    std::env::set_var("NEUROLAN_JOBS", "not-a-number");
    let bad = run([
        "neurolan",
        "lan",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    std::env::remove_var("NEUROLAN_JOBS");
    assert_eq!(code, 0);
    assert_eq!(bad, 2, "an unparsable NEUROLAN_JOBS is a config error");
    assert!(out.join("rows.csv").exists());
}

#[test]
fn failing_verdicts_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // A separation threshold no model can reach makes the identifiability
    // verdict fail deterministically.
    let cfg = write_config(
        dir.path(),
        "identify.json",
        r#"{
            "kind": "identify",
            "grid_per_dim": 2,
            "horizon": 0.2,
            "particles": 200,
            "threshold": 1e9
        }"#,
    );
    assert_eq!(
        run(["neurolan", "validate", "--config", cfg.to_str().unwrap()]),
        0
    );
    let out = dir.path().join("out");
    let code = run([
        "neurolan",
        "identify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "1",
    ]);
    assert_eq!(code, 1, "unmet verdicts exit with 1");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], false);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // Unknown field inside the model section.
    let broken = dir.path().join("broken.json");
    fs::write(
        &broken,
        r#"{"seed": 1, "model": {"oops": true}, "experiment": {"kind": "lan"}}"#,
    )
    .unwrap();
    assert_eq!(run(["neurolan", "validate", "--config", broken.to_str().unwrap()]), 2);
    assert_eq!(run(["neurolan", "lan", "--config", broken.to_str().unwrap()]), 2);

    // Estimate pointing at a missing record file: valid config, runtime
    // error once executed.
    let cfg = write_config(
        dir.path(),
        "estimate.json",
        r#"{"kind": "estimate", "record": "/no/such/record.jsonl"}"#,
    );
    assert_eq!(
        run(["neurolan", "validate", "--config", cfg.to_str().unwrap()]),
        0,
        "validate must not read the record"
    );
    assert_eq!(run(["neurolan", "estimate", "--config", cfg.to_str().unwrap()]), 2);
}

#[test]
fn output_directory_from_the_config_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-config");
    let text = format!(
        r#"{{
            "seed": 9,
            "model": {{
                "drift": {{"type": "zero"}},
                "reset": {{"type": "none"}},
                "mark_law": {{"type": "uniform", "min": -0.3, "max": 0.3}},
                "initial_law": {{"type": "uniform", "min": 0.0, "max": 1.0}},
                "rate": {{"family": "constant"}},
                "theta_box": {{"lower": [0.5], "upper": [2.0]}}
            }},
            "experiment": {{"kind": "simulate", "theta_star": [1.0], "n": 4, "horizon": 0.5}},
            "output": {{"directory": {:?}}}
        }}"#,
        out.to_str().unwrap()
    );
    let cfg = dir.path().join("sim.json");
    fs::write(&cfg, text).unwrap();
    let code = run(["neurolan", "simulate", "--config", cfg.to_str().unwrap(), "--jobs", "1"]);
    assert_eq!(code, 0);
    assert!(out.join("rows.csv").exists());
    assert!(out.join("record.jsonl").exists());
}
