use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qvix_cli::ExperimentConfig;
use qvix_core::vi::{classify_active, ActiveTolerances};
use qvix_core::{NodalFunction, ObstacleMap};

fn qvix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qvix"))
        .args(args)
        .output()
        .unwrap()
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("cfg.json");
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn validate_accepts_bundled_configs() {
    for entry in std::fs::read_dir(bundled("")).unwrap() {
        let path = entry.unwrap().path();
        let out = qvix(&["validate", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}", path.display());
    }
}

#[test]
fn invalid_field_reports_path_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"version": 1, "grid": {"n_nodes": 1}, "operator": {"c": 1.0, "bc": "neumann"},
            "map": {"kind": "plateau", "levels": [1.0], "eps": 0.1}, "forcing": 1.0, "run": "min"}"#,
    );
    let out = qvix(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid.n_nodes"), "{err}");
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"version": 1, "grid": {"n_nodes": 8}, "operator": {"c": 1.0, "bc": "neumann", "k": 2},
            "map": {"kind": "plateau", "levels": [1.0], "eps": 0.1}, "forcing": 1.0, "run": "min"}"#,
    );
    let out = qvix(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("operator"));
}

#[test]
fn mixed_sign_direction_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"version": 1, "grid": {"n_nodes": 8}, "operator": {"c": 1.0, "bc": "neumann"},
            "map": {"kind": "plateau", "levels": [1.0], "eps": 0.1}, "forcing": 1.0, "run": "min",
            "direction": {"sign": "nonnegative",
                          "value": {"type": "polynomial", "coeffs": [1.0, -3.0]}}}"#,
    );
    let out = qvix(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("direction.value"));
}

#[test]
fn oracle_rejects_large_grids() {
    let out = qvix(&["oracle", bundled("toy_min.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_agrees_on_small_grid() {
    let out = qvix(&["oracle", bundled("toy_oracle.json").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn toy_run_writes_constant_solutions_and_zero_derivative() {
    let dir = tempfile::tempdir().unwrap();
    let out = qvix(&[
        "run",
        bundled("toy_min.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    for (label, level) in [("min", 1.0), ("max", 2.0)] {
        let rows = read_rows(&dir.path().join(format!("solution_{label}.csv")));
        assert_eq!(rows.len(), 101);
        for r in rows {
            let u: f64 = r[1].parse().unwrap();
            assert!((u - level).abs() <= 1e-8);
        }
    }
    for r in read_rows(&dir.path().join("alpha_min.csv")) {
        assert_eq!(r[1].parse::<f64>().unwrap(), 0.0);
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["sensitivity"]["alpha_vnorm"], 0.0);
}

#[test]
fn iterate_table_has_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    qvix(&[
        "run",
        bundled("thermoforming_desk.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let mut rdr = csv::Reader::from_path(dir.path().join("iterates_min.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["iter", "step_vnorm", "qvi_residual", "min_node_delta"]
    );
    let mut rdr = csv::Reader::from_path(dir.path().join("sensitivity_min.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["s", "quotient_error_vnorm"]);
}

#[test]
fn class_column_matches_recomputed_partition() {
    let dir = tempfile::tempdir().unwrap();
    let path = bundled("thermoforming_contact.json");
    let out = qvix(&["run", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());

    let problem = ExperimentConfig::load(&path).unwrap().validate().unwrap();
    for label in ["min", "max"] {
        let rows = read_rows(&dir.path().join(format!("solution_{label}.csv")));
        let u = NodalFunction::new(
            problem.grid,
            rows.iter().map(|r| r[1].parse().unwrap()).collect(),
        )
        .unwrap();
        let phi = problem.map.evaluate(&u).unwrap();
        let tols = ActiveTolerances::scaled(&problem.forcing, &phi);
        let partition = classify_active(&problem.op, &problem.forcing, &u, &phi, &tols).unwrap();
        let written: String = rows.iter().map(|r| r[4].to_string()).collect();
        let expected: String = partition.classes().iter().map(|c| c.code()).collect();
        assert_eq!(written, expected);
        assert!(written.contains('S'));
    }
}

#[test]
fn log_level_comes_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_qvix"))
        .env("QVIX_LOG", "debug")
        .args(["validate", bundled("toy_min.json").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
}
