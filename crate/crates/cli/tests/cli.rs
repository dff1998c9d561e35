//! End-to-end runs of the `sixbar` binary: outputs and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sixbar(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sixbar")).args(args).current_dir(dir).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sixbar-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn run_writes_outputs_and_succeeds() {
    let dir = scratch("run");
    std::fs::write(dir.join("c.json"), r#"{"policy": "alternating"}"#).unwrap();
    let out = sixbar(&["run", "--config", "c.json", "--incline-deg", "6", "--out", "o"], &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("o/result.json")).unwrap()).unwrap();
    assert_eq!(result["success"], true);
    assert_eq!(result["policy"], "alternating");
    assert_eq!(result["incline_deg"], 6.0);
    let com = std::fs::read_to_string(dir.join("o/com_trace.csv")).unwrap();
    assert!(com.starts_with("t,x,y,z,height_pct\n"));
    let margins = std::fs::read_to_string(dir.join("o/margins.csv")).unwrap();
    assert!(margins.starts_with("t,uphill_margin,downhill_margin\n"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn failed_trial_exits_2() {
    let dir = scratch("fail");
    let out = sixbar(&["run", "--policy", "single", "--incline-deg", "30", "--out", "o"], &dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.join("o/result.json").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn config_errors_exit_3() {
    let dir = scratch("config");
    std::fs::write(dir.join("unknown.json"), r#"{"polcy": "single"}"#).unwrap();
    std::fs::write(dir.join("invalid.json"), r#"{"world": {"friction_coefficient": -1}}"#).unwrap();
    std::fs::write(dir.join("log.jsonl"), "not json\n").unwrap();
    for args in [
        &["run", "--config", "unknown.json"][..],
        &["run", "--config", "invalid.json"],
        &["run", "--config", "missing.json"],
        &["run", "--incline-deg", "95"],
        &["sweep", "--from", "10", "--to", "0", "--step", "2"],
        &["replay", "--log", "log.jsonl"],
    ] {
        let out = sixbar(args, &dir);
        assert_eq!(out.status.code(), Some(3), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn sweep_writes_csv() {
    let dir = scratch("sweep");
    let out = sixbar(&["sweep", "--from", "0", "--to", "4", "--step", "4", "--policy", "simultaneous", "--trials", "1", "--out", "o"], &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("o/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "theta_deg,policy,success_rate,avg_velocity");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,simultaneous,1.0000,"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn exports_and_replay() {
    let dir = scratch("export");
    assert!(sixbar(&["topology", "--out", "o"], &dir).status.success());
    let topology: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("o/topology.json")).unwrap()).unwrap();
    assert_eq!(topology["nodes"].as_array().unwrap().len(), 12);
    assert_eq!(topology["actuated_cables"].as_array().unwrap().len(), 6);

    assert!(sixbar(&["schedule", "--policy", "alternating", "--out", "o"], &dir).status.success());
    let timeline = std::fs::read_to_string(dir.join("o/schedule.csv")).unwrap();
    assert_eq!(timeline.lines().next().unwrap().split(',').count(), 7);
    assert!(dir.join("o/schedule.json").exists());

    assert!(sixbar(&["contraction", "--from", "0", "--to", "0", "--out", "o"], &dir).status.success());
    let curves = std::fs::read_to_string(dir.join("o/required_contraction.csv")).unwrap();
    assert_eq!(curves.lines().next().unwrap(), "theta_deg,cable,required_fraction");
    assert_eq!(curves.lines().count(), 7);

    // a hand-written session log replays the same way twice
    let config = serde_json::to_string(&sixbar_core::harness::ScenarioConfig::default()).unwrap();
    let log = format!(
        "{{\"type\":\"header\",\"protocol\":1,\"config\":{config},\"options\":{{\"frame_rate\":30.0,\"speed\":1.0}}}}\n\
         {{\"type\":\"command\",\"wall\":0.25,\"seq\":1,\"op\":\"run_policy\",\"kind\":\"single\"}}\n\
         {{\"type\":\"end\",\"wall\":1.0}}\n"
    );
    std::fs::write(dir.join("s.jsonl"), log).unwrap();
    let a = sixbar(&["replay", "--log", "s.jsonl"], &dir);
    let b = sixbar(&["replay", "--log", "s.jsonl", "--out", "messages.jsonl"], &dir);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let stdout = String::from_utf8(a.stdout).unwrap();
    assert!(stdout.contains("frames 31"), "{stdout}");
    assert_eq!(stdout, String::from_utf8(b.stdout).unwrap());
    assert!(std::fs::read_to_string(dir.join("messages.jsonl")).unwrap().contains("\"type\":\"ack\""));
    let _ = std::fs::remove_dir_all(&dir);
}
