use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_counterpoint"))
        .args(args)
        .env_remove("COUNTERPOINT_JOBS")
        .output()
        .expect("binary runs")
}

fn model(name: &str) -> String {
    models().join(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn paths_command() {
    let o = run(&["paths", &model("stlb_pde.mudd")]);
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<String> = stdout(&o).lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 3);

    let dir = tempfile::tempdir().unwrap();
    let done = write(dir.path(), "done.mudd", "done;\n");
    let o = run(&["paths", &done, "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["paths"].as_array().unwrap().len(), 1);
    assert_eq!(v["paths"][0]["signature"], serde_json::json!([]));

    let o = run(&["paths", &model("cyclic.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cycle"));

    let bad = write(dir.path(), "bad.mudd", "switch (p) {\n  case a: counter x;\n");
    let o = run(&["paths", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.mudd:"), "{}", stderr(&o));
}

#[test]
fn constraints_command() {
    let o = run(&["constraints", &model("walk_then_pde.mudd")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().any(|l| l == "load.pde$_miss ≤ load.causes_walk"));
    let o = run(&["constraints", &model("pde_then_abort.mudd")]);
    assert!(!stdout(&o).contains("load.pde$_miss ≤ load.causes_walk"));

    let dir = tempfile::tempdir().unwrap();
    let one = write(dir.path(), "one.mudd", "counter c;\n");
    let o = run(&["constraints", &one]);
    assert_eq!(stdout(&o).trim(), "0 ≤ c");

    let o = run(&["constraints", &model("walk_then_pde.mudd"), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["namespace"], serde_json::json!(["load.causes_walk", "load.pde$_miss"]));
}

#[test]
fn check_command_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "load.causes_walk,load.pde$_miss\n1,2\n1,2\n1,2\n");
    let o = run(&["check", &model("walk_then_pde.mudd"), &bad]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("INFEASIBLE"));
    assert!(text.contains("load.pde$_miss ≤ load.causes_walk"));

    let o = run(&["check", &model("walk_then_pde.mudd"), &bad, "--format", "json"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["infeasible"], 1);
    assert_eq!(v["runs"][0]["feasible"], false);

    let malformed = write(dir.path(), "m.csv", "load.causes_walk,load.pde$_miss\n1,x\n2,3\n");
    assert_eq!(run(&["check", &model("walk_then_pde.mudd"), &malformed]).status.code(), Some(2));
    let missing = dir.path().join("nope.csv").display().to_string();
    assert_eq!(run(&["check", &model("walk_then_pde.mudd"), &missing]).status.code(), Some(2));
    assert_eq!(
        run(&["check", &model("walk_then_pde.mudd"), &bad, "--alpha", "1.5"]).status.code(),
        Some(2)
    );
}

#[test]
fn synth_then_check_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv").display().to_string();
    let o = run(&["synth", &model("stlb_pde.mudd"), "--flows", "3,5,8", "--samples", "8", "--out", &csv]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(&["check", &model("stlb_pde.mudd"), &csv]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    // a directory of runs
    let o = run(&["check", &model("stlb_pde.mudd"), &dir.path().display().to_string(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));

    let zero = run(&["synth", &model("stlb_pde.mudd"), "--flows", "0,0,0", "--samples", "3"]);
    let text = stdout(&zero);
    assert_eq!(text.lines().next(), Some("t,load.causes_walk,load.pde$_miss"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",0,0")));

    let args = ["synth", &model("stlb_pde.mudd"), "--noise", "0.5", "--seed", "7", "--samples", "5"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);

    let constant = run(&["synth", &model("stlb_pde.mudd"), "--flows", "4,4,4", "--samples", "4"]);
    let rows: Vec<&str> = std::str::from_utf8(&constant.stdout)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap().1)
        .collect();
    assert!(rows.windows(2).all(|w| w[0] == w[1]));

    assert_eq!(run(&["synth", &model("stlb_pde.mudd"), "--flows", "1,2"]).status.code(), Some(2));
}

#[test]
fn explore_command() {
    let o = run(&["explore", &model("search_catalog.json")]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("feasible: m4, m8"));
    assert!(text.contains("required features: TlbPf, EarlyPsc, Merging, WalkBypass"));

    let o = run(&["explore", &model("search_catalog.json"), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["feasible"], serde_json::json!(["m4", "m8"]));

    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.json", r#"{"models": []}"#);
    let o = run(&["explore", &empty]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);

    let broken = write(
        dir.path(),
        "broken.json",
        r#"{"models": [{"name": "a", "parent": {"name": "ghost", "edge": "pruning"}}]}"#,
    );
    assert_eq!(run(&["explore", &broken]).status.code(), Some(2));
    let missing_model = write(dir.path(), "mm.json", r#"{"models": [{"name": "a", "model": "nope.mudd"}]}"#);
    assert_eq!(run(&["explore", &missing_model]).status.code(), Some(2));

    let o = run(&["explore", &model("refinement_catalog.json")]);
    assert!(stdout(&o).contains("relaxation walk_then_pde -> pde_then_abort: cone expanded"));
}

#[test]
fn config_file_and_format_agree() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "r.csv", "load.causes_walk,load.pde$_miss\n1,2\n1,2.1\n1.1,2\n");
    let cfg = write(dir.path(), "c.conf", "# defaults\nformat = json\nalpha=0.05\n");
    let o = run(&["check", &model("walk_then_pde.mudd"), &csv, "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["runs"][0]["feasible"], false);
    let text = run(&["check", &model("walk_then_pde.mudd"), &csv, "--config", &cfg, "--format", "text"]);
    assert_eq!(text.status.code(), Some(1));
    assert!(stdout(&text).contains("INFEASIBLE"));

    let bad = write(dir.path(), "bad.conf", "colour = blue\n");
    assert_eq!(run(&["paths", &model("stlb_pde.mudd"), "--config", &bad]).status.code(), Some(2));

    let jobs = Command::new(env!("CARGO_BIN_EXE_counterpoint"))
        .args(["check", &model("walk_then_pde.mudd"), &csv])
        .env("COUNTERPOINT_JOBS", "2")
        .output()
        .unwrap();
    assert_eq!(jobs.status.code(), Some(1));
}
