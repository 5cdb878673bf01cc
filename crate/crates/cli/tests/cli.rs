use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nlsred(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nlsred"));
    cmd.current_dir(dir).env_remove("NLSR_CONFIG").env_remove("NLSR_CONVENTION");
    if let Some(text) = config {
        let path = dir.join("config.json");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.args(args).output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

const SECH: &str = r#"{"dimension": 1, "exponent": 3,
  "fields": {"V": {"expr": "0"}, "K": {"expr": "1"}, "A": {"components": ["0"]}}}"#;

const RING: &str = r#"{"dimension": 2, "exponent": 3,
  "fields": {"V": {"expr": "exp(-((sqrt(x1^2+x2^2)-0.3)/0.2)^2)"}, "K": {"expr": "1"},
             "A": {"components": ["0", "0"]}}}"#;

#[test]
fn ground_state_in_one_dimension_is_root_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlsred(dir.path(), &["ground", "--out", "o"], Some(SECH));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("o/ground.json"));
    assert_eq!(v["command"], "ground");
    assert_eq!(v["convention"], "derived");
    let u0 = v["result"]["metadata"]["U0"].as_f64().unwrap();
    assert!((u0 - 2f64.sqrt()).abs() < 1e-8, "{u0}");
    let csv = std::fs::read_to_string(dir.path().join("o/profile.csv")).unwrap();
    assert!(csv.lines().count() > 100);
    // floats carry 17 significant digits
    let text = std::fs::read_to_string(dir.path().join("o/ground.json")).unwrap();
    assert!(text.contains("\"U0\": 1.41421356"));
    assert!(text.contains("e0,") || text.contains("e0\n"));
}

#[test]
fn ring_landscape_is_a_circle() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlsred(dir.path(), &["landscape", "--out", "o"], Some(RING));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("o/landscape.json"));
    let circles: Vec<&Value> = v["result"]["manifolds"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|m| m["shape"] == "circle")
        .collect();
    assert_eq!(circles.len(), 1);
    assert_eq!(circles[0]["multiplicity_bound"], 2);
    assert_eq!(circles[0]["bott_nondegenerate"], true);
    let csv = std::fs::read_to_string(dir.path().join("o/critical_points.csv")).unwrap();
    assert!(csv.starts_with("x1,x2,value,kind,eig1,eig2,residual\n"));
}

#[test]
fn default_checks_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlsred(dir.path(), &["check", "--out", "o"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("o/check.json"));
    let items = v["result"]["items"].as_array().unwrap();
    assert!(items.len() >= 8);
    assert!(items.iter().all(|i| i["passed"] == true));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = SECH.replacen('{', r#"{"colour": 1, "#, 1);
    let out = nlsred(dir.path(), &["ground", "--out", "o"], Some(&text));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
    assert!(!dir.path().join("o/ground.json").exists());
}

#[test]
fn usage_and_field_errors_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nlsred(dir.path(), &["frobnicate"], None).status.code(), Some(2));
    let bad_expr = SECH.replace(r#""expr": "0""#, r#""expr": "sin(x9)""#);
    assert_eq!(nlsred(dir.path(), &["check", "--out", "o"], Some(&bad_expr)).status.code(), Some(11));
    let supercritical = r#"{"dimension": 3, "exponent": 6,
      "fields": {"V": {"expr": "0"}, "K": {"expr": "1"}, "A": {"components": ["0", "0", "0"]}}}"#;
    assert_eq!(nlsred(dir.path(), &["ground", "--out", "o"], Some(supercritical)).status.code(), Some(10));
    let missing = dir.path().join("nope.json");
    let out = Command::new(env!("CARGO_BIN_EXE_nlsred"))
        .args(["ground", "--config"])
        .arg(&missing)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn convention_flag_changes_only_the_constants() {
    let dir = tempfile::tempdir().unwrap();
    nlsred(dir.path(), &["ground", "--out", "a"], Some(SECH));
    nlsred(dir.path(), &["ground", "--out", "b", "--convention", "paper-literal"], Some(SECH));
    let a = read_json(&dir.path().join("a/ground.json"));
    let b = read_json(&dir.path().join("b/ground.json"));
    assert_eq!(b["convention"], "paper-literal");
    assert_eq!(a["result"]["metadata"], b["result"]["metadata"]);
    // ∫U⁴ = 16/3 and ‖U‖ = 2 for the sech profile
    assert!((a["result"]["c0"].as_f64().unwrap() - 16.0 / 3.0).abs() < 1e-7);
    assert!((b["result"]["c0"].as_f64().unwrap() - 2.0).abs() < 1e-7);
    assert_ne!(a["config_hash"], b["config_hash"]);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"dimension": 2, "exponent": 3, "grid": {"half_width": 12, "points": 65},
      "epsilon": [0.2, 0.1], "seeds": [[0.0, 0.0]],
      "fields": {"V": {"expr": "exp(-(x1^2+x2^2))"}, "K": {"expr": "1"}, "A": {"components": ["0", "0"]}}}"#;
    let a = nlsred(dir.path(), &["sweep", "--out", "a", "--threads", "1"], Some(cfg));
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = nlsred(dir.path(), &["sweep", "--out", "b", "--threads", "3"], Some(cfg));
    assert!(b.status.success());
    for name in ["sweep.json", "sweep.csv"] {
        let x = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let v = read_json(&dir.path().join("a/sweep.json"));
    assert_eq!(v["result"]["orbits"], serde_json::json!([1, 1]));
}

#[test]
fn solve_writes_a_readable_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"dimension": 2, "exponent": 3, "grid": {"half_width": 12, "points": 65},
      "epsilon": [0.2], "seeds": [[0.0, 0.0]],
      "fields": {"V": {"expr": "exp(-(x1^2+x2^2))"}, "K": {"expr": "1"}, "A": {"components": ["0.3", "-0.2"]}}}"#;
    let out = nlsred(dir.path(), &["solve", "--out", "o"], Some(cfg));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(dir.path().join("o/solution_0.bin")).unwrap();
    let u = nlsred::grid::ComplexField::read_snapshot(&bytes[..]).unwrap();
    assert_eq!(u.grid().points(), 65);
    let slice = std::fs::read_to_string(dir.path().join("o/slice_0.csv")).unwrap();
    assert!(slice.starts_with("x,re,im,abs\n"));
    assert_eq!(slice.lines().count(), 66);
    let v = read_json(&dir.path().join("o/solve.json"));
    let phase = &v["result"]["entries"][0]["phase_gradient"];
    assert!((phase[0].as_f64().unwrap() - 0.3).abs() < 1e-6);
    assert!(!dir.path().join("o/.solve.json.tmp").exists());
}
