//! End-to-end runs of the binary: exit codes and report files.

use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_traverse-lab")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("traverse-lab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn explore_lazylist_is_clean() {
    let out = run(&["explore", "--structure", "lazylist", "--threads", "2", "--ops", "2", "--keys", "1..4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn scenario_citrus_weakreach_meets_expectations() {
    let out = run(&["scenario", "citrus-weakreach"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("weak_k(3)"));
}

#[test]
fn orig_insert_order_mutation_is_caught() {
    let dir = scratch("orig");
    let out = run(&[
        "explore",
        "--structure",
        "lotree",
        "--mutate",
        "orig-insert-order",
        "--workloads",
        "0",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let verdicts: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("verdicts.json")).unwrap()).unwrap();
    assert!(verdicts["tallies"]["effect-points"]["violation"].as_u64().unwrap() > 0);
    let cex = std::fs::read_to_string(dir.join("counterexample.jsonl")).unwrap();
    assert!(cex.lines().next().unwrap().contains("\"header\""));

    // the counterexample replays through `check` with the same verdict
    let out = run(&["check", dir.join("counterexample.jsonl").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn stress_runs_each_structure() {
    for s in ["lazylist", "lotree", "cftree", "citrus"] {
        let out = run(&["stress", "--structure", s, "--threads", "3", "--ops", "40", "--seed", "3"]);
        assert_eq!(out.status.code(), Some(0), "{s}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn json_format_is_parseable() {
    let out = run(&["scenario", "cf-backtrack", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).expect("json on stdout");
    assert_eq!(v["name"], "cf-backtrack");
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["explore", "--structure", "nosuch"]).status.code(), Some(1));
    assert_eq!(run(&["scenario", "nosuch"]).status.code(), Some(1));
    assert_eq!(run(&["explore", "--structure", "lazylist", "--keys", "4..1"]).status.code(), Some(1));
}
