//! End-to-end tests for the embshard binary: drive the full pipeline through
//! the CLI in a temporary directory and check outputs, exit codes, and
//! rerun determinism.

use std::path::Path;
use std::process::Command;

use embshard::plan::{validate_plan, ShardingPlan};
use embshard::tables::load_tasks;

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_embshard"))
        .args(args)
        .output()
        .expect("spawn embshard binary")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

fn path_str(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().expect("utf8 path").to_owned()
}

#[test]
fn test_pipeline_through_cli() {
    let dir = tempfile::tempdir().expect("tempdir");
    let d = dir.path();
    let pool = path_str(d, "pool.json");
    let tasks = path_str(d, "tasks.json");
    let comp = path_str(d, "comp.jsonl");
    let comm_fwd = path_str(d, "comm_fwd.jsonl");
    let comm_bwd = path_str(d, "comm_bwd.jsonl");
    let models = path_str(d, "models");

    let out = run_ok(&[
        "gen-pool", "--tables", "30", "--seed", "7", "--out", &pool,
    ]);
    assert!(out.contains("30 tables"), "unexpected gen-pool output: {out}");

    run_ok(&[
        "gen-tasks", "--pool", &pool, "--count", "2", "--devices", "2",
        "--t-min", "4", "--t-max", "6", "--max-dim", "64", "--seed", "11",
        "--out", &tasks,
    ]);
    let task_list = load_tasks(d.join("tasks.json").as_path()).expect("load tasks");
    assert_eq!(task_list.len(), 2);

    run_ok(&[
        "gen-data", "compute", "--pool", &pool, "--count", "200",
        "--n-max", "5", "--seed", "3", "--out", &comp,
    ]);
    run_ok(&[
        "gen-data", "comm", "--pool", &pool, "--direction", "fwd",
        "--count", "200", "--devices", "2", "--n-min", "4", "--n-max", "8",
        "--seed", "4", "--out", &comm_fwd,
    ]);
    run_ok(&[
        "gen-data", "comm", "--pool", &pool, "--direction", "bwd",
        "--count", "200", "--devices", "2", "--n-min", "4", "--n-max", "8",
        "--start-max", "0", "--seed", "5", "--out", &comm_bwd,
    ]);

    for data in [&comp, &comm_fwd, &comm_bwd] {
        let out = run_ok(&["train", "--data", data, "--models", &models, "--epochs", "3"]);
        assert!(out.contains("fingerprint"), "train output missing fingerprint: {out}");
    }
    for file in ["compute.json", "comm_fwd.json", "comm_bwd.json"] {
        assert!(d.join("models").join(file).is_file(), "missing model file {file}");
    }

    let plan_path = path_str(d, "plan.json");
    let out = run_ok(&[
        "shard", "--task", &tasks, "--task-index", "0", "--models", &models,
        "--out", &plan_path,
    ]);
    assert!(out.contains("\"feasible\":true"), "shard output: {out}");
    let plan = ShardingPlan::load(d.join("plan.json").as_path()).expect("load plan");
    validate_plan(&task_list[0], &plan).expect("planner plan validates");
    assert_eq!(plan.algorithm, "planner");

    let baseline_path = path_str(d, "plan_size.json");
    let out = run_ok(&[
        "baseline", "--task", &tasks, "--task-index", "1", "--algorithm", "size",
        "--out", &baseline_path,
    ]);
    assert!(out.contains("\"feasible\":true"), "baseline output: {out}");
    let plan = ShardingPlan::load(d.join("plan_size.json").as_path()).expect("load plan");
    validate_plan(&task_list[1], &plan).expect("baseline plan validates");
    assert!(plan.col.is_empty());

    let r1 = path_str(d, "r1.json");
    let r2 = path_str(d, "r2.json");
    let csv = path_str(d, "r1.csv");
    let out = run_ok(&[
        "eval", "--tasks", &tasks, "--models", &models, "--omit-timing",
        "--out", &r1, "--csv", &csv,
    ]);
    assert!(out.contains("planner"), "eval output: {out}");
    run_ok(&[
        "eval", "--tasks", &tasks, "--models", &models, "--omit-timing",
        "--out", &r2,
    ]);
    let b1 = std::fs::read(d.join("r1.json")).expect("read r1");
    let b2 = std::fs::read(d.join("r2.json")).expect("read r2");
    assert_eq!(b1, b2, "eval reruns with timing omitted must be byte-identical");

    let csv_text = std::fs::read_to_string(d.join("r1.csv")).expect("read csv");
    let lines: Vec<&str> = csv_text.lines().collect();
    assert_eq!(lines.len(), 1 + 6 * 2, "header plus one row per (algorithm, task)");
    assert!(lines[0].starts_with("label,algorithm,task,success"));
}

#[test]
fn test_unknown_flag_fails() {
    let out = run(&["gen-pool", "--tables", "5", "--bogus", "1"]);
    assert!(!out.status.success());
}

#[test]
fn test_missing_input_file_fails() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = run(&[
        "gen-tasks", "--pool", &path_str(dir.path(), "absent.json"),
        "--out", &path_str(dir.path(), "tasks.json"),
    ]);
    assert!(!out.status.success());
}

#[test]
fn test_baseline_rejects_planner() {
    let dir = tempfile::tempdir().expect("tempdir");
    let d = dir.path();
    let pool = path_str(d, "pool.json");
    let tasks = path_str(d, "tasks.json");
    run_ok(&["gen-pool", "--tables", "10", "--seed", "1", "--out", &pool]);
    run_ok(&[
        "gen-tasks", "--pool", &pool, "--count", "1", "--devices", "2",
        "--t-min", "4", "--t-max", "5", "--seed", "2", "--out", &tasks,
    ]);
    let out = run(&[
        "baseline", "--task", &tasks, "--algorithm", "planner",
        "--out", &path_str(d, "p.json"),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("shard command"));
}
