//! End-to-end runs of the `bilocal` binary on the built-in fixtures.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bilocal")).args(args).output().expect("binary runs")
}

fn run_json(dir: &Path, args: &[&str]) -> (i32, Value) {
    let path = dir.join("report.json");
    let mut all: Vec<&str> = args.to_vec();
    let p = path.to_str().unwrap();
    all.extend(["--json", p]);
    let out = run(&all);
    let code = out.status.code().unwrap();
    let text = std::fs::read_to_string(&path).unwrap_or_else(|_| {
        panic!("no report; stderr: {}", String::from_utf8_lossy(&out.stderr))
    });
    (code, serde_json::from_str(&text).unwrap())
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn check_flags_the_degenerate_point() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r) = run_json(dir.path(), &["check", "--fixture", "P3", "--x", "0", "--y", "-1", "--xi", "0"]);
    assert_eq!(code, 0);
    assert_eq!(r["verdicts"]["lower_kkt"], Value::Bool(false));
    assert_eq!(r["verdicts"]["lower_licq"], Value::Bool(false));
    assert_eq!(r["verdicts"]["jacobian_uniqueness"], Value::Bool(false));
}

#[test]
fn check_passes_on_the_projection_solution() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r) = run_json(dir.path(), &["check", "--fixture", "P2", "--x", "0,0", "--y", "0.5,0.5", "--mu", "-0.5"]);
    assert_eq!(code, 0);
    for (k, v) in r["verdicts"].as_object().unwrap() {
        assert_eq!(v, &Value::Bool(true), "{k}");
    }
    assert!(f(&r["evidence"]["second_order_sufficient_min_eig"]) > 0.0);
    assert_eq!(r["command"][0], "check");
    assert_eq!(r["problem_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn check_regular_clip_branch() {
    let dir = tempfile::tempdir().unwrap();
    let (_, r) = run_json(dir.path(), &["check", "--fixture", "P1", "--x", "0", "--y", "1", "--xi", "1"]);
    assert_eq!(r["verdicts"]["jacobian_uniqueness"], Value::Bool(true));
}

#[test]
fn sens_matches_hand_derivatives() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r) = run_json(dir.path(), &["sens", "--fixture", "P1", "--x", "0"]);
    assert_eq!(code, 0);
    assert!(f(&r["matrices"]["Jy"][0][0]).abs() < 1e-12);
    assert!((f(&r["matrices"]["Jxi"][0][0]) + 1.0).abs() < 1e-12);
    assert!(f(&r["evidence"]["Jxi_max_delta"]) < 1e-6);
    assert_eq!(r["verdicts"]["fd_agreement"], Value::Bool(true));
}

#[test]
fn solve_with_rate_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r) = run_json(
        dir.path(),
        &["solve", "--fixture", "P2", "--x0", "1,1", "--y0", "0.3,0.3", "--rho0", "10", "--rate-sweep"],
    );
    assert_eq!(code, 0);
    assert_eq!(r["verdicts"]["converged"], Value::Bool(true));
    assert_eq!(r["verdicts"]["rate_ordering"], Value::Bool(true));
    assert!((f(&r["evidence"]["u"]["y"][0]) - 0.5).abs() < 1e-6);
    assert!(!r["trace"].as_array().unwrap().is_empty());
    assert_eq!(r["evidence"]["rate_sweep"].as_array().unwrap().len(), 3);
}

#[test]
fn grid_exposes_both_lower_minimizers() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r) = run_json(
        dir.path(),
        &["grid", "--fixture", "P3", "--x-range", "-1,1", "--y-range", "-2,2", "--step", "0.01"],
    );
    assert_eq!(code, 0);
    assert!(f(&r["evidence"]["x"][0]).abs() < 1e-9);
    assert!((f(&r["evidence"]["y"][0]) + 1.0).abs() < 1e-9);
    let mins = r["evidence"]["lower_minimizers"].as_array().unwrap();
    let other: Vec<&Value> = mins.iter().filter(|m| m["selected"] == Value::Bool(false)).collect();
    assert_eq!(other.len(), 1);
    assert!((f(&other[0]["y"][0]) - 1.0).abs() < 1e-6);
}

#[test]
fn grid_refuses_three_upper_variables() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("big.txt");
    std::fs::write(&file, "dims n=3 m=1\nupper.objective x1 + x2 + x3\nlower.objective y1^2\n").unwrap();
    let out = run(&["grid", "--problem", file.to_str().unwrap(), "--x-range", "0,1", "--y-range", "0,1", "--step", "0.5"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn load_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "dims n=1 m=1\nupper.objective x1 +\nlower.objective y1^2\n").unwrap();
    for args in [
        vec!["check", "--problem", bad.to_str().unwrap(), "--x", "0", "--y", "0"],
        vec!["check", "--problem", "/nonexistent/problem.txt", "--x", "0", "--y", "0"],
        vec!["check", "--fixture", "P9", "--x", "0", "--y", "0"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    }
}

#[test]
fn dimension_errors_exit_with_three() {
    for args in [
        vec!["check", "--fixture", "P2", "--x", "0", "--y", "0.5,0.5"],
        vec!["sens", "--fixture", "P1", "--x", "0,0"],
        vec!["solve", "--fixture", "P4", "--lam0", "1"],
    ] {
        assert_eq!(run(&args).status.code(), Some(3), "{args:?}");
    }
}

#[test]
fn verify_passes() {
    let out = run(&["verify"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(!text.contains("FAIL"), "{text}");
    assert!(text.contains("all invariants hold"));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let args = ["solve", "--fixture", "P4", "--x0", "0", "--y0", "0.5", "--xi0", "0.5", "--json", path.to_str().unwrap()];
    run(&args);
    let first = std::fs::read(&path).unwrap();
    run(&args);
    assert_eq!(first, std::fs::read(&path).unwrap());

    let mut timed = args.to_vec();
    timed.push("--wall-time");
    run(&timed);
    let r: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert!(f(&r["wall_time_s"]) >= 0.0);
}

#[test]
fn problem_file_and_fixture_hash_alike() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p1.txt");
    std::fs::write(&file, bilocal::problem::fixture_text("P1").unwrap()).unwrap();
    let (_, a) = run_json(dir.path(), &["check", "--fixture", "P1", "--x", "0", "--y", "1", "--xi", "1"]);
    let (_, b) = run_json(dir.path(), &["check", "--problem", file.to_str().unwrap(), "--x", "0", "--y", "1", "--xi", "1"]);
    assert_eq!(a["problem_hash"], b["problem_hash"]);
    assert_eq!(a["verdicts"], b["verdicts"]);
}
