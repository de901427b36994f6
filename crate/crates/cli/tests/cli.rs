use std::path::Path;
use std::process::{Command, Output};

use fracbubble::bubble_constant;
use fracbubble_cli::RunConfig;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracbubble"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_with(config: &str, args: &[&str]) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, config).unwrap();
    let mut full = vec!["--config", path.to_str().unwrap()];
    full.extend_from_slice(args);
    (run(&full), dir)
}

/// (comment line, header, rows) of a CSV written by the tool.
fn parse(bytes: &[u8]) -> (String, Vec<String>, Vec<Vec<String>>) {
    let text = std::str::from_utf8(bytes).unwrap();
    let (comment, body) = text.split_once('\n').unwrap();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (comment.to_string(), header, rows)
}

#[test]
fn selftest_is_deterministic_and_passes() {
    let a = run(&["selftest", "--seed", "3"]);
    let b = run(&["selftest", "--seed", "3"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let (comment, header, rows) = parse(&a.stdout);
    assert!(comment.starts_with("# fracbubble ") && comment.contains("seed=3"));
    assert_eq!(header, ["check", "passed", "value", "tolerance"]);
    assert!(rows.len() >= 10);
    assert!(rows.iter().all(|r| r[1] == "true"));
    assert!(!a.stdout.contains(&b'\r'));
}

#[test]
fn bubble_eval_three_points() {
    let (out, _d) = run_with("[eval]\ncount = 3\n", &["bubble-eval"]);
    assert_eq!(out.status.code(), Some(0));
    let (_, header, rows) = parse(&out.stdout);
    let mut expected = vec!["index".to_string()];
    expected.extend((1..=5).map(|i| format!("y{i}")));
    expected.push("u".into());
    expected.extend((1..=5).map(|l| format!("z1_{l}")));
    expected.extend(["frac_lap_exact".into(), "frac_lap_quadrature".into()]);
    assert_eq!(header, expected);
    assert_eq!(rows.len(), 3);
    // the first point is the bubble center
    let u: f64 = rows[0][6].parse().unwrap();
    assert_eq!(u, bubble_constant(5, 0.9));
    for r in &rows {
        let exact: f64 = r[12].parse().unwrap();
        let quad: f64 = r[13].parse().unwrap();
        assert!((quad - exact).abs() < 1e-3 * exact, "{exact} {quad}");
    }
}

#[test]
fn bubble_eval_zero_points_has_header_only() {
    let (out, _d) = run_with("[eval]\ncount = 0\n", &["bubble-eval"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("index,y1,"));
}

#[test]
fn sweep_with_one_eps_has_empty_slope() {
    let (out, _d) = run_with("[problem]\neps_list = [1e-6]\n", &["residual-sweep"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, header, rows) = parse(&out.stdout);
    assert_eq!(rows.len(), 1);
    assert_eq!(header.last().unwrap(), "slope");
    assert_eq!(rows[0].last().unwrap(), "");
    assert_eq!(rows[0][1], "5");
}

#[test]
fn reduce_window_error_exits_4() {
    let (out, _d) = run_with("[solver]\nt_lo = 1.0\nt_hi = 5.0\n", &["reduce"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside the search window"));
}

#[test]
fn reduce_default_certifies_the_root() {
    let out = run(&["reduce"]);
    assert_eq!(out.status.code(), Some(0));
    let (_, _, rows) = parse(&out.stdout);
    let get = |k: &str| -> f64 { rows.iter().find(|r| r[0] == k).unwrap()[1].parse().unwrap() };
    assert!((get("t") - get("t_closed_form")).abs() < 1e-10);
    assert_eq!(get("faces_ok"), 1.0);
}

#[test]
fn config_errors_exit_2_with_key_path() {
    let (out, _d) = run_with("[tower]\nm = 2\nbogus = 1\n", &["bubble-eval"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    let (out, _d) = run_with("[problem]\ns = 0.1\n", &["constants"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("problem"));
    let (out, _d) = run_with("[tower]\nm = \"auto\"\n", &["constants"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tower.m"));
}

#[test]
fn show_config_round_trips() {
    let (out, dir) = run_with("[problem]\neps = 1e-7\n[tower]\nm = \"auto\"\nt = 0.8\n", &["show-config"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed = RunConfig::from_toml(&text).unwrap();
    assert_eq!(parsed, parsed.effective().unwrap());
    let again = dir.path().join("again.toml");
    std::fs::write(&again, &text).unwrap();
    let second = run(&["--config", again.to_str().unwrap(), "show-config"]);
    assert_eq!(second.stdout, text.as_bytes());
}

#[test]
fn out_flag_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    let to_file = run(&["constants", "--out", path.to_str().unwrap()]);
    assert_eq!(to_file.status.code(), Some(0));
    assert!(to_file.stdout.is_empty());
    let to_stdout = run(&["constants"]);
    assert_eq!(std::fs::read(&path).unwrap(), to_stdout.stdout);
}

#[test]
fn seed_changes_only_the_comment_of_seedless_tables() {
    let a = run(&["constants", "--seed", "1"]);
    let b = run(&["constants", "--seed", "2"]);
    let (ca, ha, ra) = parse(&a.stdout);
    let (cb, hb, rb) = parse(&b.stdout);
    assert_ne!(ca, cb);
    assert_eq!((ha, ra), (hb, rb));
}

#[test]
fn threads_flag_keeps_output() {
    let a = run(&["residual-sweep", "--threads", "1"]);
    let b = run(&["residual-sweep", "--threads", "3"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(run(&["selftest", "--threads", "0"]).status.code(), Some(2));
}

#[test]
fn pohozaev_scaling_on_exact_bubble() {
    // far from the critical point of K the weight is one
    let cfg = "[tower]\nrbar = 3.0\n[pohozaev]\nradii = [0.5]\nidentity = \"scaling\"\n";
    let (out, _d) = run_with(cfg, &["pohozaev"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, header, rows) = parse(&out.stdout);
    assert_eq!(rows.len(), 1);
    let rel: f64 = rows[0][header.iter().position(|h| h == "relative").unwrap()].parse().unwrap();
    assert!(rel < 1e-2, "{rel}");
}

#[test]
fn plot_script_is_valid_python() {
    let out = run(&["plot-script"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.starts_with(b"#!/usr/bin/env python3"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plot.py");
    std::fs::write(&path, &out.stdout).unwrap();
    if Path::new("/usr/bin/python3").exists() {
        let status = Command::new("/usr/bin/python3")
            .args(["-m", "py_compile", path.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
    }
}
