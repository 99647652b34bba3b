use std::process::Command;

use hybrid_bounds::scenario::{builtin_scenario, save_scenario};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybrid-bounds"))
}

#[test]
fn run_builtin_gnss_only_to_stdout() {
    let out = bin().args(["run", "--builtin", "A", "--sats", "0..3"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("A,0,4,s0+s1+s2+s3,"), "{}", lines[1]);
}

#[test]
fn run_writes_json_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rows.json");
    let status = bin()
        .args(["run", "--builtin", "B", "--sats", "0,1,2,3", "--format", "json", "--out"])
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["scenario"], "B");
}

#[test]
fn validate_accepts_saved_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.toml");
    save_scenario(&builtin_scenario("A").unwrap(), &path).unwrap();
    let out = bin().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn validation_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "name = \"x\"\nbogus_key = 1\n").unwrap();
    assert_eq!(bin().arg("validate").arg(&path).status().unwrap().code(), Some(1));
    assert_eq!(bin().args(["run", "--builtin", "C"]).status().unwrap().code(), Some(1));
    assert_eq!(bin().args(["run", "--builtin", "A", "--gnbs", "5"]).status().unwrap().code(), Some(1));
    assert_eq!(bin().args(["run", "--builtin", "A", "--sats", "0..3", "--format", "xml"]).status().unwrap().code(), Some(1));
    assert_eq!(bin().args(["run", "--bogus"]).status().unwrap().code(), Some(1));
}

#[test]
fn compute_failures_exit_with_two() {
    // vehicle directly below the gNB: azimuth derivatives are undefined
    let mut spec = builtin_scenario("A").unwrap();
    spec.av.state.p = hybrid_bounds::geometry::Position3::new(0.0, 0.0, 1.5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vertical.toml");
    save_scenario(&spec, &path).unwrap();
    let out = bin().args(["run", "--gnbs", "0", "--sats", "0..3", "--scenario"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().contains(",false,"), "{text}");
}

#[test]
fn oracle_quick_prints_deviations() {
    let out = bin().args(["oracle", "--quick"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.contains("EFIM"));
}
