use std::path::Path;

use rpu_merton::pipeline::{execute, execute_with, ExecOptions, MANIFEST_FILE};
use rpu_merton::scenario::{parse_scenario, ConfigError, RunKind, Scenario};
use sha2::{Digest, Sha256};

fn small(run: Vec<RunKind>, dir: &Path) -> Scenario {
    let mut s = Scenario::default_black_scholes(run);
    s.grid.t_nodes = 101;
    s.grid.x_nodes = 51;
    s.sim.n_paths = 2000;
    s.sim.dt = 0.01;
    s.output_dir = dir.to_path_buf();
    s
}

fn full() -> Vec<RunKind> {
    vec![
        RunKind::Solve,
        RunKind::Policy,
        RunKind::Simulate,
        RunKind::Expand,
        RunKind::Loss,
        RunKind::Variants,
    ]
}

fn files_with(dir: &Path, ext: &str) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn black_scholes_full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::default_black_scholes(full());
    s.sim.n_paths = 5000;
    s.output_dir = dir.path().to_path_buf();
    let report = execute(&s);
    assert_eq!(report.code(), 0, "{:?}", report.manifest.as_ref().map(|m| &m.runs));
    let csvs = files_with(dir.path(), "csv");
    assert_eq!(
        csvs,
        ["expansion.csv", "loss.csv", "policy.csv", "simulation_summary.csv", "u.csv", "variants.csv"]
    );
    assert!(dir.path().join(MANIFEST_FILE).exists());

    let m = report.manifest.unwrap();
    assert_eq!(m.outputs.len(), 6);
    for rec in &m.outputs {
        let bytes = std::fs::read(dir.path().join(&rec.file)).unwrap();
        assert_eq!(rec.sha256, hex::encode(Sha256::digest(&bytes)));
        assert_eq!(rec.bytes, bytes.len() as u64);
    }
    assert!(m.runs.iter().all(|r| r.status == "ok" && !r.implicit));
    assert_eq!(m.seed, 42);
    assert!(chrono::DateTime::parse_from_rfc3339(&m.started).is_ok());

    let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["software"]["name"], "rpu-merton");
    assert_eq!(json["scenario"]["grid"]["t_nodes"], 401);

    let summary = std::fs::read_to_string(dir.path().join("simulation_summary.csv")).unwrap();
    assert!(summary.starts_with("name,mean,se,n_paths,pass\n"));
    let rpu = summary.lines().find(|l| l.starts_with("rpu_value,")).unwrap();
    assert!(rpu.ends_with(",pass"), "{rpu}");
    let loss = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    assert!(loss.starts_with("lambda,t,x,bias,predicted_bias,delta_exact,delta_predicted,rel_utility_loss\n"));
    assert_eq!(loss.lines().count(), 1 + 3 * 401 * 201);
}

#[test]
fn loss_pulls_in_expand() {
    let dir = tempfile::tempdir().unwrap();
    let report = execute(&small(vec![RunKind::Loss], dir.path()));
    assert_eq!(report.code(), 0);
    let m = report.manifest.unwrap();
    let runs: Vec<_> = m.runs.iter().map(|r| (r.run, r.implicit)).collect();
    assert_eq!(runs, vec![(RunKind::Expand, true), (RunKind::Loss, false)]);
    let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    assert!(text.contains("\"implicit\": true"));
}

#[test]
fn unwritable_output_dir_stops_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let target = blocker.join("out");
    let report = execute(&small(full(), &target));
    assert_eq!(report.code(), 2);
    assert!(matches!(report.config_error, Some(ConfigError::Output(_))));
    assert!(report.manifest.is_none());
    assert!(!target.exists());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let mut s = small(full(), d.path());
        s.sim.dump_paths = true;
        assert_eq!(execute(&s).code(), 0);
    }
    let names = files_with(a.path(), "csv");
    assert_eq!(names.len(), 7);
    assert_eq!(names, files_with(b.path(), "csv"));
    for n in &names {
        assert_eq!(std::fs::read(a.path().join(n)).unwrap(), std::fs::read(b.path().join(n)).unwrap(), "{n}");
    }
}

#[test]
fn seed_changes_simulation_only() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut s = small(vec![RunKind::Simulate], a.path());
    execute(&s);
    s.sim.seed = 7;
    s.output_dir = b.path().to_path_buf();
    execute(&s);
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(a.path(), "u.csv"), read(b.path(), "u.csv"));
    assert_ne!(read(a.path(), "simulation_summary.csv"), read(b.path(), "simulation_summary.csv"));
}

#[test]
fn failed_run_keeps_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{
            "model": {{"family": "black_scholes", "r": 0.02, "mu": 0.08, "sigma": 0.2, "horizon": 1.0}},
            "preference": {{"utility": "cara", "gamma": 2.0, "lambda": 0.01}},
            "grid": {{"t_nodes": 101, "x_nodes": 51}},
            "sim": {{"n_paths": 100, "dt": 0.01}},
            "run": ["simulate", "variants"],
            "output_dir": {:?}
        }}"#,
        dir.path().to_str().unwrap()
    );
    let s = parse_scenario(&text).unwrap();
    let report = execute(&s);
    assert_eq!(report.code(), 1);
    let m = report.manifest.unwrap();
    let status: Vec<_> = m.runs.iter().map(|r| (r.run, r.status.as_str())).collect();
    assert_eq!(
        status,
        vec![
            (RunKind::Solve, "ok"),
            (RunKind::Policy, "ok"),
            (RunKind::Simulate, "FAILED"),
            (RunKind::Variants, "ok")
        ]
    );
    let err = m.runs[2].error.as_deref().unwrap();
    assert!(err.starts_with("invalid preference"), "{err}");
    assert_eq!(files_with(dir.path(), "csv"), ["policy.csv", "u.csv", "variants.csv"]);
    let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    assert!(text.contains("\"FAILED\""));
}

#[test]
fn plots_are_listed_and_never_gate() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = small(vec![RunKind::Policy, RunKind::Loss], dir.path());
    s.plots = true;
    let report = execute(&s);
    assert_eq!(report.code(), 0);
    let m = report.manifest.unwrap();
    let svgs = files_with(dir.path(), "svg");
    assert_eq!(svgs, ["expansion_t0.svg", "loss_bias_t0.svg", "policy_t0.svg", "u_t0.svg"]);
    for svg in &svgs {
        assert!(m.outputs.iter().any(|o| &o.file == svg && o.run == "plots"));
        let text = std::fs::read_to_string(dir.path().join(svg)).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
        assert!(text.contains("<polyline"));
    }
    assert!(m.plot_errors.is_empty());
}

#[test]
fn verify_run_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let s = small(vec![RunKind::Verify], dir.path());
    let opts = ExecOptions {
        criteria: vec!["9".into(), "13".into()],
        ..ExecOptions::default()
    };
    let report = execute_with(&s, &opts);
    assert_eq!(report.code(), 0);
    assert_eq!(report.verify.len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    let ids: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids, ["9", "13"]);
}
