use std::path::PathBuf;
use std::process::{Command, Output};

fn problem(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "problems", name].iter().collect();
    path.to_str().unwrap().to_owned()
}

fn rdc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdc")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn count_repeat_request() {
    let o = rdc(&["count", &problem("repeat_request.json")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "4096\n");
}

#[test]
fn count_over_cap_exits_2() {
    let o = rdc(&["count", "--problem", &problem("repeat_request.json"), "--cap", "100"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_at_zero_multipliers() {
    let o = rdc(&["solve", &problem("binary_hamming.json"), "--lambda-d", "0", "--lambda-g", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("lambda_d,lambda_g,rate_bits_per_symbol,distortion,cost,iterations,converged")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[2], "0");
    assert_eq!(row[6], "true");
}

#[test]
fn missing_flag_exits_1() {
    let o = rdc(&["solve", &problem("binary_hamming.json")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--lambda-d"));
    assert_eq!(rdc(&["solve", "--bogus"]).status.code(), Some(1));
    assert_eq!(rdc(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_problem_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut spec = rdc_core::acceptance::binary_hamming_spec();
    spec.source.px = vec![0.7, 0.7];
    spec.metrics.distortion[0] = -1.0;
    std::fs::write(&path, spec.to_json_string()).unwrap();
    let o = rdc(&["count", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr).into_owned();
    assert!(err.lines().count() >= 2, "{err}");
}

#[test]
fn unconverged_solve_exits_3_with_output() {
    let o = rdc(&["solve", &problem("feedforward.json"), "--lambda-d", "3", "--max-iter", "2"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).trim_end().ends_with("false"));
}

#[test]
fn target_and_closed_form_agree() {
    let o = rdc(&["target", &problem("feedforward.json"), "--target-d", "0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let rate: f64 = stdout(&o).lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    let o = rdc(&["closed-form", "feedforward-example", "--p", "0.25", "--q", "0.25", "--d", "0.1"]);
    let formula: f64 = stdout(&o).lines().nth(1).unwrap().parse().unwrap();
    assert!((rate - formula).abs() < 1e-2);
    assert!((formula - 0.342282).abs() < 1e-6);
}

#[test]
fn reduce_writes_small_support() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("support.csv");
    let o = rdc(&[
        "reduce",
        &problem("repeat_request.json"),
        "--target-d",
        "0.1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("ordinal,mass\n"));
    let mass: f64 = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((mass - 1.0).abs() < 1e-9);
    assert!(text.lines().count() - 1 <= 2 + 3);
}

#[test]
fn simulate_is_reproducible() {
    let args = [
        "simulate",
        "--problem",
        &problem("binary_hamming.json"),
        "--lambda-d",
        "2",
        "--rate",
        "0.5",
        "--m",
        "6",
        "--trials",
        "40",
        "--seed",
        "11",
    ];
    let (a, b) = (rdc(&args), rdc(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("rate,m,trials,eta,emp_distortion,stderr_d,emp_cost,stderr_c,seed\n"));
}

#[test]
fn surface_rows_in_grid_order() {
    let o = rdc(&["surface", &problem("binary_hamming.json"), "--grid", "0.5", "8", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let lambdas: Vec<f64> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(lambdas.len(), 5);
    assert!(lambdas.windows(2).all(|w| w[0] < w[1]));
}
