use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn fiddle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fiddle"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn export(dir: &Path, n: usize, p: usize) -> String {
    let path = dir.join(format!("d_{n}_{p}.csv"));
    let path = path.to_str().unwrap().to_string();
    let out = fiddle(&["export-dgp", "--n", &n.to_string(), "--p", &p.to_string(), "--seed", "3", "--out", &path]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

#[test]
fn repeated_fit_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = export(dir.path(), 150, 30);
    let args = ["fit", "--data", &data, "--method", "fiddle", "--seed", "7", "--width", "8", "--epochs", "3"];
    let (a, b) = (fiddle(&args), fiddle(&args));
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["method"], "fiddle");
    assert_eq!(v["seed"], 7);
}

#[test]
fn oracle_ipw_needs_propensity_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plain.csv");
    std::fs::write(&path, "y,T,x1\n1.0,1,0.5\n2.0,0,0.1\n").unwrap();
    let out = fiddle(&["fit", "--data", path.to_str().unwrap(), "--method", "oracle_ipw"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pi_star"));
}

#[test]
fn malformed_csv_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "y,T,x1\n1.0,1,0.5\n2.0,2,0.1\n").unwrap();
    let out = fiddle(&["fit", "--data", path.to_str().unwrap(), "--method", "oracle_ipw"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 3"), "{err}");
}

#[test]
fn smoke_fit_on_small_export() {
    let dir = tempfile::tempdir().unwrap();
    let data = export(dir.path(), 200, 50);
    let start = Instant::now();
    let out = fiddle(&["fit", "--data", &data, "--method", "fiddle", "--width", "32", "--epochs", "20"]);
    assert!(start.elapsed() < Duration::from_secs(60));
    let v = json(&out);
    let est = v["estimate"].as_f64().unwrap();
    let ci = v["ci"].as_array().unwrap();
    let (lo, hi) = (ci[0].as_f64().unwrap(), ci[1].as_f64().unwrap());
    assert!(est.is_finite());
    assert!(lo <= est && est <= hi);
    assert_eq!(v["n"], 150);
}

#[test]
fn oracle_fit_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = export(dir.path(), 300, 10);
    let out_path = dir.path().join("r.json");
    let out = fiddle(&["fit", "--data", &data, "--method", "oracle_aipw", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v["method"], "oracle_aipw");
    assert!(v["config_digest"].as_str().unwrap().len() == 16);
}

#[test]
fn simulate_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("bench.csv");
    let out = fiddle(&[
        "simulate",
        "--grid",
        "n=400;p=20,40",
        "--method",
        "oracle_ipw,oracle_aipw",
        "--reps",
        "3",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "method,n,p,rmse,se,reps,wallclock");
    assert_eq!(lines.count(), 4);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_path.with_extension("json")).unwrap()).unwrap();
    assert_eq!(report["outcomes"].as_array().unwrap().len(), 12);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = export(dir.path(), 300, 10);
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"method": "oracle_ipw", "seed": 5}"#).unwrap();
    let v = json(&fiddle(&["fit", "--config", cfg.to_str().unwrap(), "--data", &data]));
    assert_eq!(v["method"], "oracle_ipw");
    assert_eq!(v["seed"], 5);
    let v = json(&fiddle(&["fit", "--config", cfg.to_str().unwrap(), "--data", &data, "--seed", "9"]));
    assert_eq!(v["seed"], 9);
}

#[test]
fn selftest_passes_and_lists_checks() {
    let out = fiddle(&["selftest"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["formula_identities", "gradient_finite_diff", "gram_equivalence", "doubly_robust_identity"] {
        assert!(text.contains(name), "{text}");
    }
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() == 4);
}
