//! End-to-end runs of the `drot` binary.

use std::path::Path;
use std::process::{Command, Output};

use drot_cli::matrix_io::{read_matrix, read_vector, write_vector};
use serde_json::Value;

fn drot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drot")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

/// Cost `[[0, 1], [1, 0]]` with `p = (0.7, 0.3)`, `q = (0.4, 0.6)`; the
/// optimum moves 0.3 units across at unit cost.
fn swap_instance(dir: &Path) {
    std::fs::write(dir.join("cost.csv"), "0,1\n1,0\n").unwrap();
    write_vector(&dir.join("p.otmx"), &[0.7, 0.3]).unwrap();
    write_vector(&dir.join("q.otmx"), &[0.4, 0.6]).unwrap();
}

#[test]
fn solve_swap_instance_from_files() {
    let dir = tempfile::tempdir().unwrap();
    swap_instance(dir.path());
    let out = dir.path().join("out");
    for solver in ["drot", "drot-fused", "dr-reference", "admm-reference"] {
        let res = drot(&[
            "solve", "--solver", solver,
            "--cost", path(&dir.path().join("cost.csv")),
            "--p", path(&dir.path().join("p.otmx")),
            "--q", path(&dir.path().join("q.otmx")),
            "--out", path(&out), "--trace",
        ]);
        assert!(res.status.success(), "{solver}: {}", String::from_utf8_lossy(&res.stderr));
        let s = summary(&out);
        assert_eq!(s["status"], "converged");
        assert!((s["objective"].as_f64().unwrap() - 0.3).abs() <= 1e-6, "{solver}: {s}");
        assert_eq!(s["solver"], solver);
        let plan = read_matrix(&out.join("plan.otmx")).unwrap();
        assert!((plan.get(0, 1) - 0.3).abs() <= 1e-5);
        let mu = read_vector(&out.join("mu.otmx")).unwrap();
        let nu = read_vector(&out.join("nu.otmx")).unwrap();
        assert_eq!((mu.len(), nu.len()), (2, 2));
        let trace = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
        assert!(trace.lines().count() >= 1);
        for line in trace.lines() {
            let rec: Value = serde_json::from_str(line).unwrap();
            assert!(rec["iteration"].as_u64().unwrap() >= 1);
        }
    }
}

#[test]
fn sinkhorn_single_precision_underflow_fails_loudly() {
    let dir = tempfile::tempdir().unwrap();
    let res = drot(&[
        "solve", "--solver", "sinkhorn", "--eta", "1e-4", "--precision", "f32",
        "--m", "64", "--n", "64", "--seed", "1", "--out", path(dir.path()),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("numerical failure"));
    let s = summary(dir.path());
    assert_eq!(s["status"], "numerical_failure");
    assert_eq!(s["reason"], "numerical failure");
}

#[test]
fn missing_input_file() {
    let dir = tempfile::tempdir().unwrap();
    let res = drot(&["solve", "--cost", "/nonexistent/cost.otmx", "--out", path(dir.path())]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("I/O error") && err.contains("/nonexistent/cost.otmx"), "{err}");
}

#[test]
fn inconsistent_flags_rejected() {
    let res = drot(&["solve", "--solver", "drot", "--eta", "0.1", "--m", "3", "--n", "3"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("eta"));
}

#[test]
fn outputs_are_deterministic_except_timing() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let res = drot(&["solve", "--m", "12", "--n", "9", "--seed", "4", "--workers", "3", "--bs", "4", "--ws", "1", "--trace", "--out", path(&out)]);
        assert!(res.status.success());
        out
    };
    let (a, b) = (run("a"), run("b"));
    for file in ["plan.otmx", "mu.otmx", "nu.otmx", "trace.jsonl"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let (mut sa, mut sb) = (summary(&a), summary(&b));
    sa["wall_time_secs"] = Value::Null;
    sb["wall_time_secs"] = Value::Null;
    assert_eq!(sa, sb);
}

#[test]
fn gen_then_solve_matches_direct_generation() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    assert!(drot(&["gen", "--m", "6", "--n", "5", "--seed", "7", "--out", path(&inst)]).status.success());
    let spec: Value = serde_json::from_str(&std::fs::read_to_string(inst.join("spec.json")).unwrap()).unwrap();
    assert_eq!(spec["seed"], 7);
    let from_files = dir.path().join("files");
    let direct = dir.path().join("direct");
    assert!(drot(&[
        "solve", "--cost", path(&inst.join("cost.otmx")), "--p", path(&inst.join("p.otmx")),
        "--q", path(&inst.join("q.otmx")), "--out", path(&from_files),
    ]).status.success());
    assert!(drot(&["solve", "--m", "6", "--n", "5", "--seed", "7", "--out", path(&direct)]).status.success());
    assert_eq!(std::fs::read(from_files.join("plan.otmx")).unwrap(), std::fs::read(direct.join("plan.otmx")).unwrap());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"solver":"dr-reference","max_iters":2,"generator":{"m":4,"n":4,"seed":1}}"#).unwrap();
    let out = dir.path().join("out");
    let res = drot(&["solve", "--config", path(&config), "--max-iters", "5", "--out", path(&out)]);
    assert!(res.status.success());
    let s = summary(&out);
    assert_eq!(s["solver"], "dr-reference");
    assert_eq!(s["iterations"], 5);
    assert_eq!(s["status"], "max_iters");
}

#[test]
fn profile_and_bench_emit_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("suite.json");
    std::fs::write(
        &spec,
        r#"{"instances":3,"m":4,"n":4,"solvers":[{"label":"drot","config":{"tol_primal":1e-9,"tol_dual":1e-9,"tol_gap":1e-9}}],"epsilons":[1e-4]}"#,
    )
    .unwrap();
    let res = drot(&["profile", "--spec", path(&spec)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = String::from_utf8(res.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "solver,epsilon,fraction,solved,instances,numerical_failures,crashes,reference");
    assert!(lines[1].starts_with("drot,") && lines[1].ends_with(",3,3,0,0,lp-exact"), "{}", lines[1]);

    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, r#"{"instances":3,"m":4,"n":4,"solvers":[],"epsilons":[1e-4]}"#).unwrap();
    let res = drot(&["profile", "--spec", path(&empty)]);
    assert!(res.status.success());
    assert_eq!(String::from_utf8(res.stdout).unwrap().lines().count(), 1);

    let csv = dir.path().join("bench.csv");
    let res = drot(&["bench", "--dims", "8", "--kinds", "fused-pass,sinkhorn", "--runs", "1", "--iters", "2", "--out", path(&csv)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("fused-pass,8,8,2,"));
}
