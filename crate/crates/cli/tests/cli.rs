use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergoflow")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn solve_agrees_with_closed_form() {
    let su2 = fixture("su2.json");
    let path = su2.to_str().unwrap();
    let numeric = stdout_json(&run(&["solve", path, "-T", "0.7"]));
    let exact = stdout_json(&run(&["analytic", path, "-T", "0.7"]));
    let (a, b) = (numeric["work"].as_f64().unwrap(), exact["work"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    let c = numeric["c_value"].as_f64().unwrap();
    assert!((c - exact["c_value"].as_f64().unwrap()).abs() <= 1e-8);
}

#[test]
fn time_scale_follows_omega() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("su2.json")).unwrap().replace("\"omega\": 1.0", "\"omega\": 2.0");
    let path = dir.path().join("fast.json");
    std::fs::write(&path, text).unwrap();
    let path = path.to_str().unwrap();
    let scaled = stdout_json(&run(&["solve", path, "-T", "0.6"]));
    let absolute = stdout_json(&run(&["solve", path, "-T", "0.3", "--absolute-time"]));
    assert_eq!(scaled["work"], absolute["work"]);
}

#[test]
fn curve_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let su3 = fixture("su3.json");
    let mut files = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        let status =
            run(&["curve", su3.to_str().unwrap(), "--t-max", "3", "--points", "13", "--out", out.to_str().unwrap()]);
        assert!(status.status.success(), "{}", stderr(&status));
        files.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files.remove(0)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("T,work,c_value,power"));
    assert_eq!(lines.count(), 13);

    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    let other: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("b.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["input_digest"], other["input_digest"]);
    assert_eq!(manifest["command"], "curve");
}

#[test]
fn two_point_grid() {
    let out = run(&["curve", fixture("su2.json").to_str().unwrap(), "--t-max", "1", "--points", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
}

#[test]
fn analytic_backend_matches_numeric_curve() {
    let su2 = fixture("su2.json");
    let path = su2.to_str().unwrap();
    let json = |backend: &str| {
        stdout_json(&run(&["curve", path, "--t-max", "2", "--points", "9", "--format", "json", "--backend", backend]))
    };
    let (a, b) = (json("numeric"), json("su2-analytic"));
    let (a, b) = (a["samples"].as_array().unwrap(), b["samples"].as_array().unwrap());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x["work"].as_f64().unwrap(), y["work"].as_f64().unwrap());
        assert!((x - y).abs() <= 1e-8, "{x} vs {y}");
    }
}

#[test]
fn hubbard_validates_against_fock_space() {
    let out = run(&["hubbard", fixture("hubbard.json").to_str().unwrap(), "--t-max", "2", "--points", "5", "--validate-full"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(report["full_dim"], 6);
    assert!(report["max_work_deviation"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn fidelity_reports_transfer_time() {
    let v = stdout_json(&run(&["fidelity", fixture("fidelity_pure.json").to_str().unwrap(), "--t-max", "1", "--points", "5"]));
    let t_star = v["t_star"].as_f64().unwrap();
    assert!((t_star - std::f64::consts::FRAC_PI_4).abs() <= 1e-10, "{t_star}");
    for s in v["samples"].as_array().unwrap() {
        let (a, b) = (s["objective"].as_f64().unwrap(), s["closed_form"].as_f64().unwrap());
        assert!((a - b).abs() <= 1e-8, "T = {}: {a} vs {b}", s["T"]);
    }
}

#[test]
fn oracle_stays_below_solver() {
    let v = stdout_json(&run(&["oracle", fixture("su2.json").to_str().unwrap(), "-T", "0.6", "--segments", "4", "--attempts", "4"]));
    assert_eq!(v["violation"], false);
    assert!(v["ratio"].as_f64().unwrap() >= 0.999);
}

#[test]
fn input_errors_exit_with_code_two() {
    let out = run(&["solve", fixture("su2.json").to_str().unwrap(), "-T", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["solve", "/nonexistent/scenario.json", "-T", "1"]);
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"algebra": "su2_spin_half", "h_f": {"re": [[1.0, 0.0]]}, "rho_i": {"re": [[1, 0], [0, 0]]}, "omega": 1}"#)
        .unwrap();
    let out = run(&["solve", bad.to_str().unwrap(), "-T", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("h_f"), "{}", stderr(&out));

    let unknown = dir.path().join("unknown.json");
    let text = std::fs::read_to_string(fixture("su2.json")).unwrap().replace("\"omega\": 1.0", "\"omega\": 1.0, \"beta\": 2");
    std::fs::write(&unknown, text).unwrap();
    let out = run(&["solve", unknown.to_str().unwrap(), "-T", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("beta"), "{}", stderr(&out));
}

#[test]
fn convergence_failure_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"max_iters": 1, "restart_budget": 0}"#).unwrap();
    let out = run(&["--config", config.to_str().unwrap(), "solve", fixture("su3.json").to_str().unwrap(), "-T", "0.4"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("did not converge"), "{}", stderr(&out));
}

#[test]
fn trace_is_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let out = run(&["solve", fixture("su3.json").to_str().unwrap(), "-T", "0.4", "--trace", trace.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        serde_json::from_str::<Value>(line).unwrap();
    }
}
