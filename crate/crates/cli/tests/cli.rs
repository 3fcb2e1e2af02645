use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_toral-rigidity"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn presets_are_listed() {
    let out = run(&["presets"]);
    assert!(out.status.success());
    let names = String::from_utf8(out.stdout).unwrap();
    for p in ["cat-linear", "cat-perturbed-generic", "theoremB-desk", "dim2", "dim3-companion", "skew-slow-fiber"] {
        assert!(names.lines().any(|l| l == p), "{p} missing");
    }
}

#[test]
fn linear_cat_full_run_is_rigid_and_reproducible() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = run(&["full", "--preset", "cat-linear", "--seed", "3", "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stderr).contains("RIGID_EXPECTED"));
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"]["class"], "RigidExpected");
    assert_eq!(report["config"]["seed"], 3);
    for f in ["config.toml", "report.txt", "linear.json", "periodic.csv", "growth_plot.svg"] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    let (ca, cb) = (csv_files(&a), csv_files(&b));
    assert!(!ca.is_empty());
    assert_eq!(ca, cb, "same seed must reproduce every CSV byte for byte");
}

#[test]
fn written_config_reloads_to_the_same_run() {
    let tmp = TempDir::new().unwrap();
    let first = tmp.path().join("first");
    assert!(run(&["analyze-linear", "--preset", "dim2", "--out", first.to_str().unwrap()]).status.success());
    let second = tmp.path().join("second");
    let cfg = first.join("config.toml");
    let out = run(&["analyze-linear", "--config", cfg.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(first.join("linear.json")).unwrap(), fs::read(second.join("linear.json")).unwrap());
}

#[test]
fn overlay_config_changes_only_what_it_names() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(&cfg, "preset = \"cat-linear\"\nname = \"short\"\n[horizons]\nt_max = 3\n").unwrap();
    let out_dir = tmp.path().join("out");
    let out = run(&["periodic", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let written = fs::read_to_string(out_dir.join("config.toml")).unwrap();
    assert!(written.contains("name = \"short\""));
    assert!(written.contains("t_max = 3"));
    assert!(written.contains("n_max = 12"), "preset values survive the overlay");
}

#[test]
fn bad_configs_exit_with_code_2() {
    let tmp = TempDir::new().unwrap();
    let unknown_key = tmp.path().join("k.toml");
    fs::write(&unknown_key, "[horizons]\nnot_a_field = 1\n").unwrap();
    let singular = tmp.path().join("s.toml");
    fs::write(&singular, "[map]\nmatrix = [[1, 1], [1, 1]]\n").unwrap();
    let missing = tmp.path().join("absent.toml");
    for path in [&unknown_key, &singular, &missing] {
        let out = run(&["analyze-linear", "--config", path.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
    }
    let out = run(&["full", "--preset", "no-such-preset"]);
    assert_eq!(out.status.code(), Some(2));
}
