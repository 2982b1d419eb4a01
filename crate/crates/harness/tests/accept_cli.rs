use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn nsg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsg")).args(args).output().expect("nsg runs")
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).display().to_string()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p: PathBuf = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn clarke_default_exits_zero_with_interval_checks() {
    let out = nsg(&["run", "--config", &config("clarke-default.json"), "--no-timing"]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = report["records"].as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"generalized gradient interval at x = -1"));
    assert!(names.contains(&"generalized gradient interval at x = 2"));
    assert_eq!(report["config"]["experiment"], "clarke-examples");
    assert!(report["records"].as_array().unwrap().iter().all(|r| r["runtime_ms"].is_null()));
}

#[test]
fn identity_sigma_satisfies_all_four_conditions() {
    let out = nsg(&["run", "--config", &config("sigma-identity.json")]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let conds: Vec<&Value> = report["records"].as_array().unwrap().iter().filter(|r| r["anchor"].as_str().unwrap().starts_with("condition")).collect();
    assert_eq!(conds.len(), 4);
    assert!(conds.iter().all(|r| r["satisfied"] == true));
    // Records derived from another check's computation carry no timing of their own.
    assert!(report["records"].as_array().unwrap().iter().any(|r| r["runtime_ms"].is_u64()));
}

#[test]
fn twist_half_fails_lip_condition_with_worst_geodesic() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("report.json");
    let csv_path = dir.path().join("curves.csv");
    let out = nsg(&[
        "run",
        "--config",
        &config("sigma-twist-0.5.json"),
        "--out",
        out_path.to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report["exit_code"], 1);
    let c15 = report["records"].as_array().unwrap().iter().find(|r| r["anchor"] == "condition (1.5), Lip^b part").unwrap();
    assert_eq!(c15["satisfied"], false);
    let g = &c15["detail"]["worst_geodesic"];
    assert_eq!(g["base"].as_array().unwrap().len(), 3);
    assert_eq!(g["tangent"].as_array().unwrap().len(), 3);

    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["t", "quantity", "value", "geodesic_id", "seed"]);
    let quantities: std::collections::BTreeSet<String> = rdr.records().map(|r| r.unwrap()[1].to_string()).collect();
    assert!(quantities.contains("curvature_defect") && quantities.contains("comparison_inner"));
}

#[test]
fn invalid_configs_exit_two_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"experiment": "gram-dependence", "parameters": {"seed": 1, "bogus": 2}}"#, "parameters.bogus"),
        (r#"{"experiment": "gram-dependence", "parameters": {}}"#, "parameters.seed"),
        (r#"{"experiment": "clarke-examples", "parameters": {"seed": 1}, "extra": 0}"#, "extra"),
        (r#"{"experiment": "sigma-conditions", "parameters": {"n": 2, "family": {"kind": "latitude-twist", "amplitude": 0.1}, "seed": 1}}"#, "parameters.n"),
    ];
    for (body, key) in cases {
        let out = nsg(&["run", "--config", &write_config(dir.path(), body)]);
        assert_eq!(out.status.code(), Some(2), "{body}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(key), "{err} should name {key}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn domain_errors_exit_three_naming_the_check() {
    let dir = tempfile::tempdir().unwrap();
    // Coincident p and q leave no bisector to examine.
    let body = r#"{"experiment": "twisted-hypotheses", "parameters": {"manifold": {"kind": "flat-torus", "dim": 2}, "p": [0.1, 0.2], "q": [0.1, 0.2], "grid": 8}}"#;
    let out = nsg(&["run", "--config", &write_config(dir.path(), body)]);
    assert_eq!(out.status.code(), Some(3));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["error"]["check"], "twisted-sphere hypotheses");

    // A twist this strong collapses directions near the poles.
    let body = r#"{"experiment": "sigma-conditions", "parameters": {"n": 3, "family": {"kind": "latitude-twist", "amplitude": 20.0}, "seed": 1}}"#;
    let out = nsg(&["run", "--config", &write_config(dir.path(), body)]);
    assert_eq!(out.status.code(), Some(3));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["error"]["check"], "sigma is a diffeomorphism");
}

#[test]
fn list_is_stable_and_names_anchors() {
    let a = nsg(&["list"]);
    let b = nsg(&["list"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.contains("sigma-conditions: checks (1.5)/(1.6)/(1.7)"));
    assert!(text.contains("gram-dependence: §3.4 construction"));
    let names: Vec<&str> = text.lines().map(|l| l.split(':').next().unwrap()).collect();
    assert_eq!(names, ["clarke-examples", "mollify-bounds", "sigma-conditions", "extension-certificates", "twisted-hypotheses", "gram-dependence"]);
}

#[test]
fn version_prints_the_crate_version() {
    let out = nsg(&["version"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), format!("nsg {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn thread_count_does_not_change_the_report() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_nsg"))
            .env("NSG_THREADS", threads)
            .args(["run", "--config", &config("extension-twist-0.01.json"), "--no-timing"])
            .output()
            .unwrap()
    };
    let (one, two) = (run("1"), run("3"));
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, two.stdout);
    assert_eq!(run("zero").status.code(), Some(2));
}
