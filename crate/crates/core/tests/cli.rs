use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pexstab"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn stabilize(cfg: &std::path::Path, threads: Option<&str>) -> (Output, String) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let mut cmd = bin();
    cmd.args(["stabilize", "--config"]).arg(cfg).arg("--out").arg(&out);
    if let Some(t) = threads {
        cmd.env("PEXSTAB_THREADS", t);
    }
    let output = cmd.output().unwrap();
    let report = std::fs::read_to_string(&out).unwrap_or_default();
    (output, report)
}

#[test]
fn noisy_lattice_run() {
    let (out, report) = stabilize(&config("noisy_lattice.json"), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["version"], 1);
    let s = &v["stability"];
    assert_eq!(s["L"], 0.5);
    assert_eq!(s["strategy"], "lambda");
    for key in ["f", "g", "h"] {
        assert!(s["bounds"][key]["min_margin"].as_f64().unwrap() >= 0.0);
    }
    for key in ["quadratic", "jensen", "side_condition"] {
        assert!(s["laws"][key].as_f64().unwrap() <= 1e-9);
    }
    assert!(s["hypothesis_margin"].as_f64().unwrap() >= 0.0);
    assert!(s["traces"]["q"]["steps"].is_array());
}

#[test]
fn reports_are_byte_identical() {
    let cfg = config("noisy_lattice.json");
    let (_, a) = stabilize(&cfg, Some("1"));
    let (_, b) = stabilize(&cfg, Some("1"));
    let (_, c) = stabilize(&cfg, Some("4"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn exit_codes() {
    let (out, report) = stabilize(&config("not_contractive.json"), None);
    assert_eq!(out.status.code(), Some(3));
    let v: Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["status"]["exit_code"], 3);

    let (out, _) = stabilize(&config("singular_generator.json"), None);
    assert_eq!(out.status.code(), Some(4));

    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("noisy_lattice.json")).unwrap();
    let weak = dir.path().join("weak.json");
    std::fs::write(&weak, text.replace("\"theta\": 0.001", "\"theta\": 0.00001")).unwrap();
    assert_eq!(stabilize(&weak, None).0.status.code(), Some(2));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"version\": 1,").unwrap();
    assert_eq!(stabilize(&broken, None).0.status.code(), Some(4));

    let (out, _) = stabilize(&config("noisy_lattice.json"), Some("0"));
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn oracle_dimensions() {
    let out = bin().args(["oracle", "--config"]).arg(config("z5_noisy.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["quadratic"]["dimension"], 0);
    assert_eq!(v["jensen"]["dimension"], 1);
    assert_eq!(v["jensen_with_side_condition"]["dimension"], 0);
}

#[test]
fn coeffs_against_reference() {
    let out = bin()
        .args(["coeffs", "--theta", "1", "--p", "0.5", "--beta", "0.9", "--K", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    // 25-digit evaluations of the same formulas
    for (key, want) in [
        ("f", 72.98096161808622938018077),
        ("g", 73.98096161808622938018077),
        ("h", 17.7155383478414904762843),
    ] {
        let got = v[key].as_f64().unwrap();
        assert!(((got - want) / want).abs() <= 1e-10, "{key}: {got}");
    }
    for (p, beta) in [("0.8", "0.9"), ("0.5", "0.7")] {
        let out = bin()
            .args(["coeffs", "--theta", "1", "--p", p, "--beta", beta, "--K", "2"])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(4));
    }
}

#[test]
fn selftest_injected_exponent_fails() {
    let out = bin().args(["selftest", "--norm-exponent", "1.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("[FAIL] β-norm axioms (exponent 1.5)")));
}

#[test]
fn selftest_exit_code_matches_verdicts() {
    let out = bin().arg("selftest").output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().filter(|l| l.starts_with('[')).collect();
    assert_eq!(lines.iter().filter(|l| l.contains("criterion")).count(), 9);
    for l in lines.iter().filter(|l| !l.contains("criterion")) {
        assert!(l.starts_with("[PASS]"), "{l}");
    }
    let any_fail = lines.iter().any(|l| l.starts_with("[FAIL]"));
    assert_eq!(out.status.code(), Some(if any_fail { 1 } else { 0 }));
}
