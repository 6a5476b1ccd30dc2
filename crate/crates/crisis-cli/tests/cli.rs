use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SCENARIO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../crisis-sim/scenarios/honest-bounded.scenario");

fn crisis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crisis")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_into(dir: &Path) -> serde_json::Value {
    let out = dir.to_str().unwrap();
    let o = crisis(&["run", "--scenario", SCENARIO, "--seed", "7", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(stdout(&o).trim()).unwrap()
}

#[test]
fn run_writes_artifacts_and_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_into(dir.path());
    assert_eq!(summary["seed"], 7);
    assert_eq!(summary["agreement_ratio"], 1.0);
    assert_eq!(summary["max_candidate_set"], 1);
    for name in ["metrics.jsonl", "scenario.toml", "process-0.graph", "process-7.stream", "process-7.order"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let metrics = fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    let last: serde_json::Value = serde_json::from_str(metrics.lines().last().unwrap()).unwrap();
    assert_eq!(last["metric"], "summary");
    assert_eq!(last["value"], summary);
}

#[test]
fn audit_and_diff_on_run_output() {
    let dir = tempfile::tempdir().unwrap();
    run_into(dir.path());
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    let o = crisis(&["audit", &path("process-3.graph")]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("past-closure: ok"));

    let o = crisis(&["diff-order", &path("process-0.order"), &path("process-5.order")]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("first divergence: none"));
}

#[test]
fn audit_reports_dangling_causes() {
    let dir = tempfile::tempdir().unwrap();
    run_into(dir.path());
    let graph = fs::read_to_string(dir.path().join("process-0.graph")).unwrap();
    // Every other vertex descends from some sink; dropping all sinks leaves
    // references to vertices that are not in the dump.
    let kept: Vec<&str> = graph.lines().filter(|l| l.split('\t').nth(2) != Some("[]")).collect();
    let broken = dir.path().join("broken.graph");
    fs::write(&broken, kept.join("\n")).unwrap();

    let o = crisis(&["audit", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("past-closure violated"), "{}", stdout(&o));
}

#[test]
fn diff_order_reports_divergence() {
    let dir = tempfile::tempdir().unwrap();
    run_into(dir.path());
    let order = fs::read_to_string(dir.path().join("process-0.order")).unwrap();
    let mut lines: Vec<&str> = order.lines().collect();
    lines.swap(2, 3);
    let mut swapped = String::new();
    for (i, l) in lines.iter().enumerate() {
        let digest = l.split('\t').nth(1).unwrap();
        swapped.push_str(&format!("{i}\t{digest}\n"));
    }
    let other = dir.path().join("swapped.order");
    fs::write(&other, swapped).unwrap();

    let a = dir.path().join("process-0.order");
    let o = crisis(&["diff-order", a.to_str().unwrap(), other.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("common prefix: 2"), "{}", stdout(&o));
    assert!(stdout(&o).contains("first divergence: 2"));
}

#[test]
fn bad_scenarios_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("future.scenario");
    fs::write(&scenario, "schema_version = 2\n").unwrap();
    let o = crisis(&["run", "--scenario", scenario.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema_version 2"));
}
