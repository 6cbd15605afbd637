use std::path::Path;
use std::process::{Command, Output};

fn rpu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpu")).args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

const SCENARIO: &str = r#"{
    "model": {"family": "factor_premium", "r": 0.02, "rho": -0.5, "horizon": 1.0, "sigma": 0.2, "kappa": 1.0, "theta": 0.3, "nu": 0.2},
    "preference": {"utility": "crra", "gamma": 2.0, "lambda": 0.01},
    "grid": {"t_nodes": 101, "x_nodes": 51},
    "sim": {"n_paths": 1000, "dt": 0.01, "seed": 3},
    "run": ["simulate"]
}"#;

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("scenario.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn single_criterion_selection() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpu(&["verify", "--criterion", "9", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let lines: Vec<&str> = stdout.lines().filter(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]")).collect();
    assert_eq!(lines.len(), 1, "{stdout}");
    assert!(lines[0].contains(" 9 "));
    assert!(dir.path().join("verify.csv").exists());
}

#[test]
fn coarsened_grid_reports_measured_and_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpu(&["verify", "--criterion", "12", "--coarsen", "8", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = text(&out.stdout);
    let line = stdout.lines().find(|l| l.starts_with("[FAIL]")).expect("a failing line");
    assert!(line.contains("measured") && line.contains("allowed"), "{line}");
}

#[test]
fn unknown_criterion_is_a_usage_error() {
    let out = rpu(&["verify", "--criterion", "99"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("unknown criterion"));
}

#[test]
fn misspelled_key_exits_two_with_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SCENARIO.replace("\"model\"", "\"modle\""));
    let out = rpu(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("did you mean `model`"), "{err}");
}

#[test]
fn range_error_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SCENARIO.replace("\"gamma\": 2.0", "\"gamma\": -1.0"));
    let out = rpu(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("preference.gamma"));
}

#[test]
fn simulate_subcommand_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCENARIO);
    let out_dir = dir.path().join("out");
    let out = rpu(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--seed", "11", "--plots"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    for f in ["u.csv", "policy.csv", "simulation_summary.csv", "u_t0.svg", "policy_t0.svg", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["runs"][0]["implicit"], true);
    assert_eq!(manifest["runs"][2]["run"], "simulate");
}

#[test]
fn run_uses_the_scenario_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SCENARIO.replace("[\"simulate\"]", "[\"expand\", \"variants\"]"));
    let out_dir = dir.path().join("out");
    let out = rpu(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(out_dir.join("expansion.csv").exists());
    assert!(out_dir.join("variants.csv").exists());
    assert!(!out_dir.join("u.csv").exists());
    assert_eq!(rpu(&["run"]).status.code(), Some(2));
}

#[test]
fn missing_config_file_exits_two() {
    let out = rpu(&["solve", "--config", "/nonexistent/scenario.json"]);
    assert_eq!(out.status.code(), Some(2));
}
