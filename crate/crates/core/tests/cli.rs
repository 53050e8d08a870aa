//! The `haarfactor` binary: exit codes, artifacts and report determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use haarfactor::blocks::FactorizationCertificate;
use haarfactor::cli::{SuiteReport, CSV_HEADER, SCHEMA_VERSION};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_haarfactor"))
}

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/demo.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn factorize_demo_writes_a_passing_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let tr = dir.path().join("transcript.json");
    let out = run(&[
        "factorize",
        "--config",
        demo().to_str().unwrap(),
        "--out",
        cert.to_str().unwrap(),
        "--transcript",
        tr.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let c: FactorizationCertificate = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    assert!(c.is_ok());
    assert!(c.residual_max.unwrap() <= 1e-8);

    // the saved transcript replays to the same bytes
    let out = run(&["game", "--replay", tr.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("identical"));
}

#[test]
fn tampered_transcript_fails_replay() {
    let dir = tempfile::tempdir().unwrap();
    let tr = dir.path().join("t.json");
    assert_eq!(run(&["game", "--config", demo().to_str().unwrap(), "--out", tr.to_str().unwrap()]).status.code(), Some(0));
    let text = std::fs::read_to_string(&tr).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["turns"][0]["value"] = serde_json::json!(123.0);
    std::fs::write(&tr, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    assert_eq!(run(&["game", "--replay", tr.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"big\": 3 }").unwrap();
    assert_eq!(run(&["factorize", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["factorize", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));
    assert_eq!(run(&["factorize"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn r_estimate_suite_csv_has_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let out = run(&["estimates", "--suite", "r-estimates", "--samples", "40", "--out", csv.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let cases = SuiteReport::cases_from_csv(&text).unwrap();
    assert_eq!(cases.len(), 14);
    assert!(cases.iter().all(|c| c.passed && c.margin >= -1e-9));
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
}

#[test]
fn single_grid_point() {
    let out = run(&["estimates", "--grid", "3,1.5", "--samples", "10", "--depth", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);
}

#[test]
fn reports_are_identical_apart_from_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str| {
        let p = dir.path().join(name);
        let out = run(&["estimates", "--samples", "30", "--seed", "9", "--out", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        let mut r = SuiteReport::from_json(&std::fs::read_to_string(p).unwrap()).unwrap();
        assert!(r.metadata.wall_clock_seconds > 0.0);
        r.metadata = Default::default();
        r.to_json().unwrap()
    };
    assert_eq!(read("a.json"), read("b.json"));
}

#[test]
fn curvature_table_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("c.csv");
    let report = dir.path().join("c.json");
    let out = run(&[
        "curvature",
        "--nmax",
        "16",
        "--p",
        "1.5",
        "--out",
        table.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().next().unwrap(), "n,value,bound,margin");
    assert_eq!(text.lines().count(), 17);
    assert!(SuiteReport::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap().passed);
}

#[test]
fn gen_op_is_deterministic() {
    let a = run(&["gen-op", "--delta", "0.5", "--offdiag", "0.01", "--seed", "7"]);
    let b = run(&["gen-op", "--delta", "0.5", "--offdiag", "0.01", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["gen-op", "--delta", "0.5", "--offdiag", "0.01", "--seed", "7", "--format", "csv"]);
    let text = String::from_utf8(c.stdout).unwrap();
    assert!(text.starts_with("row_k,row_j,"));
    assert_eq!(run(&["gen-op", "--delta", "-1", "--offdiag", "0", "--seed", "0"]).status.code(), Some(2));
}

#[test]
fn top_level_flags() {
    let out = run(&["--schema-version"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), SCHEMA_VERSION.to_string());
    let out = run(&["--list-suites"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("r-estimates") && text.contains("haar-norms"));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
