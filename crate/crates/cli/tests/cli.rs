use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn coalsense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coalsense"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_reports_a_stable_partition() {
    let v = stdout_json(&coalsense(&["simulate", "--seed", "5"]));
    assert_eq!(v["n_sus"], 10);
    assert_eq!(v["nash_stable"], true);
    assert_eq!(v["payoffs"].as_array().unwrap().len(), 10);
}

#[test]
fn saved_scenario_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let first = stdout_json(&coalsense(&["simulate", "--seed", "2", "--save", "--out", out]));
    let scenario = dir.path().join("scenario.json");
    assert!(scenario.exists());
    let trace = fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let last: serde_json::Value = serde_json::from_str(trace.lines().last().unwrap()).unwrap();
    assert_eq!(last["type"], "summary");
    assert_eq!(last["final"], first["partition"]);

    let again = stdout_json(&coalsense(&["simulate", "--seed", "2", "--scenario", scenario.to_str().unwrap()]));
    assert_eq!(first, again);
}

#[test]
fn config_file_keys_are_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "n_sus = 4\nn_channels = 6\nk_i = 2\nseed = 11\n").unwrap();
    let v = stdout_json(&coalsense(&["simulate", "--config", cfg.to_str().unwrap()]));
    assert_eq!(v["n_sus"], 4);
    assert_eq!(v["n_channels"], 6);
    assert_eq!(v["seed"], 11);
}

#[test]
fn bad_config_gives_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "n_channels = 4\nk_i = 9\n").unwrap();
    let out = coalsense(&["sweep-k", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid_config");
    assert_eq!(err["key"], "k_i");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn zero_seeds_rejected_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let out = coalsense(&["sweep-alpha", "--seeds", "0", "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!o.exists());
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = coalsense(&["simulate", "--config", "/definitely/not/here.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io");
}

#[test]
fn repeated_sweeps_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "n_sus = 5\nn_channels = 8\nk_i = 3\n").unwrap();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let o = dir.path().join(name);
        let out = coalsense(&[
            "sweep-alpha",
            "--config",
            cfg.to_str().unwrap(),
            "--seeds",
            "2",
            "--format",
            "json",
            "--out",
            o.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let files: Vec<_> = read_dir_sorted(&o).into_iter().filter(|(n, _)| !n.ends_with("_timing.csv")).collect();
        runs.push(files);
    }
    assert!(runs[0].len() >= 4);
    assert_eq!(runs[0], runs[1]);
    let table: serde_json::Value = serde_json::from_slice(&runs[0].iter().find(|(n, _)| n == "sweep_alpha.json").unwrap().1).unwrap();
    assert_eq!(table.as_array().unwrap().len(), 20);
}

#[test]
fn oracle_subcommand_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = coalsense(&["oracle", "--seeds", "4", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 7, "{text}");
    let csv = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert!(csv.starts_with("suite,cases,failed,max_error,passed\n"));
}

#[test]
fn unknown_subcommand_fails() {
    let out = coalsense(&["sweep-q"]);
    assert!(!out.status.success());
}
