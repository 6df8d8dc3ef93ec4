use std::path::PathBuf;
use std::process::{Command, Output};

fn gfem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfem")).args(args).output().expect("run gfem")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gfem-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn help_lists_defaults() {
    let out = gfem(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in ["verify", "solve", "study", "interior", "stability", "cusp", "[study]", "ladder = [0.2, 0.14, 0.1, 0.07, 0.05]"] {
        assert!(text.contains(needle), "missing {needle}");
    }
}

#[test]
fn bad_config_exits_with_two() {
    let dir = scratch("bad");
    let path = dir.join("bad.toml");
    std::fs::write(&path, "[study]\nladder = [0.1, 0.2]\n").unwrap();
    let out = gfem(&["--config", path.to_str().unwrap(), "verify"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("decreasing"));
    assert_eq!(gfem(&["--degree", "9", "verify"]).status.code(), Some(2));
}

#[test]
fn solve_writes_dumps() {
    let dir = scratch("solve");
    let out = gfem(&["--output-dir", dir.to_str().unwrap(), "solve", "--h", "0.2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["solution_samples.txt", "solution_coefficients.txt", "covering.json"] {
        assert!(dir.join(f).metadata().map(|m| m.len() > 0).unwrap_or(false), "{f}");
    }
    let samples = std::fs::read_to_string(dir.join("solution_samples.txt")).unwrap();
    // u = x for g = cos θ
    for line in samples.lines().filter(|l| !l.starts_with('#')).take(50) {
        let v: Vec<f64> = line.split_whitespace().map(|t| t.parse().unwrap()).collect();
        assert!((v[2] - v[0]).abs() < 1e-5, "{line}");
    }
}

#[test]
fn interior_rejects_non_nested_regions() {
    let dir = scratch("regions");
    let path = dir.join("regions.toml");
    std::fs::write(&path, "[regions]\ninner_radius = 0.8\nouter_radius = 0.5\n[study]\nladder = [0.2, 0.14, 0.1]\n").unwrap();
    let out = gfem(&["--config", path.to_str().unwrap(), "interior"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("precondition"));
}

#[test]
fn cusp_sweep_reports_failures() {
    let dir = scratch("cusp");
    let out = gfem(&["--ladder", "0.05,0.035,0.025", "--output-dir", dir.to_str().unwrap(), "cusp"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.join("cusp.csv").exists());
    assert!(dir.join("cusp.json").exists());
}
