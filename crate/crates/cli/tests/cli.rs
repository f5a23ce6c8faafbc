use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use drswalk::config::{Preset, RunConfig};
use drswalk::optimizer::GaitSolution;

fn drswalk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drswalk")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, edit: impl FnOnce(&mut RunConfig)) -> String {
    let mut cfg = RunConfig::preset(Preset::CaseB).unwrap();
    edit(&mut cfg);
    let path = dir.join(name);
    fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn optimize_case_a_reports_capped_multipliers() {
    let tmp = tempfile::tempdir().unwrap();
    let o = drswalk(tmp.path(), &["optimize", "--preset", "caseA", "--out", "a"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("|mu|"));
    let sol: GaitSolution = serde_json::from_str(&fs::read_to_string(tmp.path().join("a/gait.json")).unwrap()).unwrap();
    assert!(sol.eigenvalues.iter().all(|m| m.modulus() < 0.69));
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["x", "y"] {
        assert_eq!(code(&drswalk(tmp.path(), &["optimize", "--preset", "caseB", "--seed", "11", "--out", out])), 0);
    }
    let a = fs::read(tmp.path().join("x/gait.json")).unwrap();
    let b = fs::read(tmp.path().join("y/gait.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn infeasible_bounds_exit_with_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tight.toml", |c| {
        c.optimizer.gait_style = drswalk::optimizer::GaitStyle::ForwardWalk;
        c.optimizer.x_max.l_s = 5.0;
    });
    let o = drswalk(tmp.path(), &["optimize", "--config", &cfg, "--out", "t"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("violation"));
    assert!(!tmp.path().join("t/gait.json").exists());
}

#[test]
fn simulate_from_gait_file_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "short.toml", |c| c.scenario.duration_steps = 3);
    assert_eq!(code(&drswalk(tmp.path(), &["optimize", "--config", &cfg, "--out", "g"])), 0);
    for out in ["r1", "r2"] {
        let o = drswalk(tmp.path(), &["simulate", "--config", &cfg, "--gait", "g/gait.json", "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(tmp.path().join("r1/trace.csv")).unwrap();
    let b = fs::read(tmp.path().join("r2/trace.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("r1/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["steps_completed"], 3);
    // Nothing written outside the output directories.
    let mut entries: Vec<String> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    entries.sort();
    assert_eq!(entries, ["g", "r1", "r2", "short.toml"]);
}

#[test]
fn zero_steps_is_a_vacuous_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "zero.toml", |c| c.scenario.duration_steps = 0);
    let o = drswalk(tmp.path(), &["simulate", "--config", &cfg, "--out", "z"]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(tmp.path().join("z/trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn corrupted_gait_file_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.json"), "{\"policy\": 3").unwrap();
    let o = drswalk(tmp.path(), &["simulate", "--preset", "caseB", "--gait", "bad.json", "--out", "b"]);
    assert_eq!(code(&o), 2);
    assert!(!tmp.path().join("b").exists());
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = RunConfig::preset(Preset::CaseA).unwrap().to_toml_string().unwrap() + "\nfoo = 1\n";
    fs::write(tmp.path().join("c.toml"), text).unwrap();
    assert_eq!(code(&drswalk(tmp.path(), &["optimize", "--config", "c.toml"])), 2);
}

#[test]
fn injected_zero_gain_fails_the_stability_criteria() {
    let tmp = tempfile::tempdir().unwrap();
    let o = drswalk(tmp.path(), &["verify", "--inject-gain", "0,0"]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("[PASS]  1"));
    assert!(stdout.contains("[FAIL]  2") && stdout.contains("rho 4.023052"));
    assert_eq!(stdout.lines().filter(|l| l.starts_with('[')).count(), 10);
}
