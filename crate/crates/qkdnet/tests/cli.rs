//! The command-line front end: exit codes, output files, reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo_file(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn qkdnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdnet")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_writes_one_row_per_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = qkdnet(&[
        "analyze",
        "--stats",
        path(&repo_file("fixtures/measured_links.csv")),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("analysis.csv")).unwrap();
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 13);
    assert_eq!(&rows[12][0], "Feixi-USTC");
    assert!(rows.iter().all(|r| &r[2] == "ok"));
}

#[test]
fn analyze_to_stdout() {
    let out = qkdnet(&["analyze", "--stats", path(&repo_file("fixtures/measured_links.csv"))]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 14);
}

#[test]
fn calibrate_fits_every_link() {
    let out = qkdnet(&["calibrate", "--stats", path(&repo_file("fixtures/measured_links.csv"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let headers = rd.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    for r in rd.records().map(Result::unwrap) {
        assert_eq!(&r[col("status")], "ok");
        let mis: f64 = r[col("misalignment")].parse().unwrap();
        assert!((0.0..0.05).contains(&mis), "{mis}");
        let il: f64 = r[col("insertion_loss_db")].parse().unwrap();
        assert!((0.0..20.0).contains(&il), "{il}");
    }
}

#[test]
fn run_link_is_reproducible_byte_for_byte() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let scenario = repo_file("scenarios/ideal.toml");
    for d in [&d1, &d2] {
        let out = qkdnet(&["run-link", "--scenario", path(&scenario), "--out", path(d.path())]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["links.csv", "transcript.jsonl"] {
        let a = fs::read(d1.path().join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, fs::read(d2.path().join(f)).unwrap(), "{f}");
    }
    let out = qkdnet(&[
        "run-link",
        "--scenario",
        path(&scenario),
        "--seed",
        "8",
        "--out",
        path(d2.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(
        fs::read(d1.path().join("links.csv")).unwrap(),
        fs::read(d2.path().join("links.csv")).unwrap()
    );
}

#[test]
fn run_network_writes_and_resumes_pools() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let scenario = repo_file("scenarios/ideal.toml");
    let out = qkdnet(&["run-network", "--scenario", path(&scenario), "--out", path(d1.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "events.jsonl",
        "messages.csv",
        "budgets.csv",
        "pools/A__B.A.qkpl",
        "pools/A__B.B.qkpl",
    ] {
        assert!(d1.path().join(f).exists(), "{f}");
    }
    let out = qkdnet(&[
        "run-network",
        "--scenario",
        path(&scenario),
        "--resume",
        path(&d1.path().join("pools")),
        "--out",
        path(d2.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let budgets = fs::read_to_string(d2.path().join("budgets.csv")).unwrap();
    let first = fs::read_to_string(d1.path().join("budgets.csv")).unwrap();
    assert_ne!(budgets, first);
}

#[test]
fn failed_assertion_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = fs::read_to_string(repo_file("scenarios/ideal.toml")).unwrap();
    text = text.replace("bytes = 100", "bytes = 100000000");
    let file = dir.path().join("greedy.toml");
    fs::write(&file, text).unwrap();
    let out = qkdnet(&["run-network", "--scenario", path(&file)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    fs::write(&file, "seed = \"not a number\"\n").unwrap();
    let out = qkdnet(&["run-link", "--scenario", path(&file)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = qkdnet(&["analyze", "--stats", path(&dir.path().join("missing.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}
