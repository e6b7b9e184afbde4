use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use teamplan::bench::{parse_task_suite, BUNDLED_SUITE};
use teamplan::decompose::RobotProfile;
use teamplan::ground::ground;
use teamplan::pddl::parse_problem;

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teamplan")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn plan_then_validate() {
    let dom = data("domains/robot2.pddl");
    let prob = data("listings/prepare_plate_with_egg.pddl");
    let o = run(&["plan", path(&dom), path(&prob), "--mode", "optimal"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().starts_with("0: ("));
    assert_eq!(text.lines().last(), Some("; cost = 4"));
    assert!(stderr(&o).contains("InitLoaction"));

    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("egg.plan");
    fs::write(&plan, &text).unwrap();
    let v = run(&["validate", path(&dom), path(&prob), path(&plan)]);
    assert_eq!(v.status.code(), Some(0));
    assert!(stdout(&v).starts_with("Plan valid"));

    let swapped: Vec<&str> = text.lines().filter(|l| !l.starts_with(';')).collect();
    fs::write(&plan, format!("{}\n{}\n", swapped[2], swapped[3])).unwrap();
    let bad = run(&["validate", path(&dom), path(&prob), path(&plan), "--json"]);
    assert_eq!(bad.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&stdout(&bad)).unwrap();
    assert_eq!(report["verdict"], "Invalid");
    assert_eq!(report["failing_step"], 0);
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.pddl");
    fs::write(&broken, "(define (domain d) (:predicates (p ?x - robot)) (:action a :parameters () :precondition (holding2)))").unwrap();
    let o = run(&["parse", path(&broken)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error:"), "{}", stderr(&o));
    let dom = data("domains/robot2.pddl");
    let prob = data("listings/prepare_plate_with_egg.pddl");
    let o = run(&["plan", path(&dom), path(&prob), "--mode", "optimal", "--heuristic", "ff"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unsolvable_plan_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("p.pddl");
    fs::write(
        &prob,
        "(define (problem stuck) (:domain robot2) (:objects R - robot Egg Plate - object) (:init) (:goal (and (holding R Egg))))",
    )
    .unwrap();
    let o = run(&["plan", path(&data("domains/robot2.pddl")), path(&prob)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no plan exists"));
}

#[test]
fn pipeline_persists_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&["pipeline", path(&data("scenarios/suite.toml")), "--task", "egg_apple", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["decomposition.txt", "allocation.json", "schedule.trace", "metrics.record", "transcript.toml", "meta.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let record: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.record")).unwrap()).unwrap();
    assert_eq!(record["success"], true);

    let suite = parse_task_suite(BUNDLED_SUITE).unwrap();
    let task = suite.task("egg_apple").unwrap();
    for robot in ["Robot1", "Robot2"] {
        let sub = if robot == "Robot1" { 1 } else { 2 };
        let profile = RobotProfile::from_spec(task.robots.iter().find(|r| r.id == robot).unwrap()).unwrap();
        let text = fs::read_to_string(out.join(format!("problems/{robot}_{sub}.pddl"))).unwrap();
        let problem = parse_problem(&text, &profile.domain).unwrap().value;
        ground(&profile.domain, &problem).unwrap();
        assert!(out.join(format!("plans/{robot}_{sub}.plan")).is_file());
    }

    let plans: Vec<String> = fs::read_dir(out.join("plans")).unwrap().map(|e| e.unwrap().path().display().to_string()).collect();
    let mut args = vec!["combine".to_string(), out.join("allocation.json").display().to_string()];
    args.extend(plans);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let c = run(&args);
    assert_eq!(c.status.code(), Some(0), "{}", stderr(&c));
    assert_eq!(stdout(&c), fs::read_to_string(out.join("schedule.trace")).unwrap());
}

#[test]
fn dry_run_stops_after_problems() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dry");
    let o = run(&["pipeline", path(&data("scenarios/suite.toml")), "--task", "drawer_keys", "--out", path(&out), "--dry-run"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_dir(out.join("problems")).unwrap().count(), 3);
    assert!(!out.join("plans").exists());
    assert!(!out.join("schedule.trace").exists());
}

#[test]
fn missing_fixture_fails_at_decompose() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("other.toml");
    fs::write(&fx, "[other.precondition]\n0 = \"Subtask 1: x\"\n").unwrap();
    let out = dir.path().join("run");
    let o = run(&["pipeline", path(&data("scenarios/suite.toml")), "--task", "desk", "--fixtures", path(&fx), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stage decompose failed"), "{}", stderr(&o));
    let record: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.record")).unwrap()).unwrap();
    assert_eq!(record["success"], false);
}

#[test]
fn run_directory_guard() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("keep.txt"), "user data").unwrap();
    let o = run(&["pipeline", path(&data("scenarios/suite.toml")), "--task", "breakfast", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(dir.path().join("keep.txt").exists());
}

#[test]
fn bench_run_metrics_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let o = run(&["bench", "run", path(&data("scenarios/suite.toml")), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.lines().next().unwrap().contains("SR    Exe    GCR     RU    Eff"), "{table}");
    let records = out.join("records.json");
    let m = run(&["bench", "metrics", path(&records)]);
    assert_eq!(stdout(&m), table);

    let c = run(&["bench", "compare", "published:Reference (GPT-4o)", "published:SMART-LLM (GPT-4o)", "--weights", "30,20,20"]);
    let text = stdout(&c);
    assert!(text.contains("+109.2%") && text.contains("+37.6%"), "{text}");
    let unknown = run(&["bench", "compare", "published:Ours", path(&records)]);
    assert_eq!(unknown.status.code(), Some(2));
}
