use std::path::Path;
use std::process::{Command, Output};

const CORE_DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data");

fn ztnet(args: &[&str]) -> Output {
    ztnet_env(args, &[])
}

fn ztnet_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ztnet"));
    for k in ["ZTNET_TOPOLOGY", "ZTNET_FORMAT", "ZTNET_LOG_LEVEL", "ZTNET_SEED", "ZTNET_NOISE_SIGMA", "ZTNET_PLANNER", "ZTNET_PLANNER_ENDPOINT", "ZTNET_REPORT"] {
        cmd.env_remove(k);
    }
    cmd.args(args).envs(env.iter().copied()).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn structured(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("structured output is JSON")
}

fn without_wall_time(mut v: serde_json::Value) -> serde_json::Value {
    v.as_object_mut().unwrap().remove("wall_time_s");
    v
}

#[test]
fn every_case_exits_zero() {
    for case in ["case1", "case2", "case3"] {
        let o = ztnet(&["run", case, "--seed", "0"]);
        assert_eq!(o.status.code(), Some(0), "{case}: {}", String::from_utf8_lossy(&o.stderr));
        let text = stdout(&o);
        assert!(text.contains("Completion: 8/8") || text.contains("Completion: 4/4"), "{text}");
    }
}

#[test]
fn case3_report_names_the_new_channel() {
    let o = ztnet(&["run", "case3", "--format", "structured"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("new signal center: 193.75 THz"), "{text}");
}

#[test]
fn structured_reports_are_repeatable() {
    let a = ztnet(&["run", "case2", "--seed", "3", "--format", "structured"]);
    let b = ztnet(&["run", "case2", "--seed", "3", "--format", "structured"]);
    assert_eq!(without_wall_time(structured(&a)), without_wall_time(structured(&b)));
}

#[test]
fn env_vars_mirror_flags() {
    let o = ztnet_env(&["run", "case1"], &[("ZTNET_SEED", "4"), ("ZTNET_FORMAT", "structured")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(structured(&o)["task_id"], "case1-seed4");
}

#[test]
fn report_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("case1");
    let o = ztnet(&["run", "case1", "--report", base.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let json = std::fs::read_to_string(base.with_extension("json")).unwrap();
    let txt = std::fs::read_to_string(base.with_extension("txt")).unwrap();
    assert!(serde_json::from_str::<serde_json::Value>(&json).is_ok());
    assert!(txt.starts_with("Task case1-seed0"));
}

#[test]
fn unreachable_generative_planner_falls_back() {
    let o = ztnet(&["run", "case1", "--planner", "generative", "--planner-endpoint", "http://127.0.0.1:9/plan", "--format", "structured"]);
    assert_eq!(o.status.code(), Some(0));
    let v = structured(&o);
    assert_eq!(v["planner"], "generative");
    assert!(v["planner_fallback"].as_str().is_some_and(|s| s.contains("unreachable")));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "not = [valid").unwrap();
    let bad = bad.to_str().unwrap();
    for args in [
        vec!["run", "case4"],
        vec!["run", "case1", "--noise-sigma", "-1"],
        vec!["--topology", bad, "run", "case1"],
        vec!["--topology", "/nonexistent/topology.toml", "qot"],
        vec!["qot", "--services", bad],
        vec!["rsa", "plan", "--src", "5", "--dst", "5"],
        vec!["rsa", "plan", "--src", "5", "--dst", "9"],
        vec!["rsa", "plan", "--src", "5", "--dst", "1", "--rate", "200"],
        vec!["run", "case1", "--log-level", "loud"],
    ] {
        let o = ztnet(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn qot_tables() {
    let o = ztnet(&["qot"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 11, "{text}");
    assert!(text.lines().next().unwrap().contains("GSNR"));

    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, "").unwrap();
    let o = ztnet(&["qot", "--services", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn rsa_plan_examples() {
    let occ = Path::new(CORE_DATA).join("case3_occupancy.toml");
    let o = ztnet(&["rsa", "plan", "--src", "5", "--dst", "1", "--rate", "800", "--occupancy", occ.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("center 193.75 THz"), "{}", stdout(&o));

    let o = ztnet(&["rsa", "plan", "--src", "5", "--dst", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("center 191.05 THz"));

    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.toml");
    std::fs::write(&full, "[[oms]]\nendpoints = [5, 6]\nranges = [[0, 480]]\n").unwrap();
    let o = ztnet(&["rsa", "plan", "--src", "5", "--dst", "6", "--k", "1", "--occupancy", full.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("spectrum exhausted"));
}

#[test]
fn pool_dump_is_json_lines() {
    let o = ztnet(&["pool", "dump", "case2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut kinds = std::collections::BTreeSet::new();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).expect("each line is JSON");
        kinds.insert(v["record"].as_str().unwrap().to_string());
    }
    assert_eq!(kinds.into_iter().collect::<Vec<_>>(), ["audit", "entry"]);
}
