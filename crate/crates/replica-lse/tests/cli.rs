use std::process::Command;

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_replica-lse")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn rs_prints_csv() {
    let (code, out) = run(&["rs", "--alpha-inv", "2", "--lambda", "0.1"]);
    assert_eq!(code, 0);
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("mode,"));
    assert!(lines.next().unwrap().starts_with("rs,"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["rs", "--penalty", "bogus"]).0, 1);
    assert_eq!(run(&["rs", "--lambda", "-1"]).0, 1);
    assert_eq!(run(&["nonsense"]).0, 1);
    assert_eq!(run(&["finite", "--lambda", "0.1"]).0, 1);
    assert_eq!(run(&["sweep", "--config", "/nonexistent/cfg"]).0, 2);
}

#[test]
fn non_convergence_exits_two() {
    assert_eq!(run(&["rs", "--alpha-inv", "2", "--lambda", "0.1", "--max-iter", "1"]).0, 2);
}

#[test]
fn decoupled_and_calibrate() {
    let (code, out) = run(&["decoupled", "--xi", "1", "--re", "0.6", "--support", "psk", "--psk-order", "2"]);
    assert_eq!(code, 0);
    assert!(out.lines().nth(1).unwrap().starts_with("1.0000000000000000e0,"));
    let (code, out) = run(&["calibrate", "--alpha-inv", "2", "--penalty", "ridge-l1", "--lambda", "0.1", "--target-eta", "0.3", "--tune", "lambda1"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("coefficient,eta"));
}

#[test]
fn finite_with_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("o.csv");
    let p = path.to_str().unwrap();
    let (code, _) = run(&["finite", "--alpha-inv", "2", "--lambda", "0.1", "--n", "32", "--trials", "3", "--seed", "5", "--out", p]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
}
