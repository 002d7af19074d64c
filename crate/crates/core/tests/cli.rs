use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use betlab::cli::{main_with_args, EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, RESULT_COLUMNS};

fn betlab(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_betlab"));
    cmd.args(args).env_remove("BETLAB_OUT");
    if let Some(dir) = out_env {
        cmd.env("BETLAB_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_manifest(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const VIOLATING: &str = r#"{
  "name": "violating",
  "seed": 5,
  "jobs": [
    {
      "check": "thm6",
      "environment": { "type": "random_pomdp", "n_latent": 3, "n_actions": 2, "n_obs": 2 },
      "evaluation": {
        "tests": [
          { "actions": [0], "event": [[0]], "weight": 0.5 },
          { "actions": [1], "event": [[0]], "weight": 0.5 }
        ]
      },
      "params": { "basis": [ { "observations": [0], "weight": 0.5 }, { "observations": [1], "weight": 0.5 } ] },
      "sweep": { "k": [512] }
    }
  ]
}"#;

#[test]
fn list_prints_every_suite() {
    let o = betlab(&["list"], None);
    assert_eq!(code(&o), EXIT_OK);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.contains("thm1_sweep"));
}

#[test]
fn thm1_sweep_writes_25_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = betlab(&["run", "thm1_sweep", "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), RESULT_COLUMNS.join(","));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r.starts_with("thm1,20240601,")));
    assert!(out.join("estimates.csv").is_file());
    let echo: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest-echo.json")).unwrap()).unwrap();
    assert_eq!(echo["name"], "thm1_sweep");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&betlab(&["run", "thm4_margin", "--out", a.to_str().unwrap(), "--jobs", "1"], None)), EXIT_OK);
    assert_eq!(code(&betlab(&["run", "thm4_margin", "--out", b.to_str().unwrap(), "--jobs", "3"], None)), EXIT_OK);
    for file in ["results.csv", "estimates.csv", "manifest-echo.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn seed_flag_overrides_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&betlab(&["run", "thm1_sweep", "--out", a.to_str().unwrap()], None)), EXIT_OK);
    assert_eq!(code(&betlab(&["run", "thm1_sweep", "--out", b.to_str().unwrap(), "--seed", "9"], None)), EXIT_OK);
    let x = fs::read_to_string(a.join("results.csv")).unwrap();
    let y = fs::read_to_string(b.join("results.csv")).unwrap();
    assert_ne!(x, y);
    assert!(y.lines().skip(1).all(|r| r.starts_with("thm1,9,")));
}

#[test]
fn out_of_range_gamma_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = betlab::cli::bundled("thm1_sweep").unwrap().source.replace("\"gamma\": [0.25]", "\"gamma\": [0.6]");
    assert!(text.contains("0.6"));
    let path = write_manifest(dir.path(), "bad.json", &text);
    let out = dir.path().join("out");
    let o = betlab(&["run", &path, "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));
}

#[test]
fn malformed_inputs_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&betlab(&["run", "no_such_suite"], None)), EXIT_CONFIG);
    let path = write_manifest(dir.path(), "broken.json", "{ \"name\": ");
    assert_eq!(code(&betlab(&["run", &path], None)), EXIT_CONFIG);
    let empty = write_manifest(dir.path(), "empty.json", r#"{ "name": "e", "seed": 1, "jobs": [] }"#);
    assert_eq!(code(&betlab(&["run", &empty], None)), EXIT_CONFIG);
    assert_eq!(code(&betlab(&["run", "thm1_sweep", "--jobs", "0", "--out", dir.path().to_str().unwrap()], None)), EXIT_CONFIG);
    assert_eq!(code(&betlab(&["frobnicate"], None)), EXIT_CONFIG);
    assert_eq!(main_with_args(["betlab", "run"]), EXIT_CONFIG);
}

#[test]
fn failed_assumption_exits_with_violation() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(dir.path(), "violating.json", VIOLATING);
    let out = dir.path().join("out");
    let o = betlab(&["run", &path, "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), EXIT_VIOLATION);
    assert!(String::from_utf8_lossy(&o.stderr).contains("thm6_linear_update"));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("thm6_linear_update") && l.contains(",false,")));
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from_env");
    let flag_dir = dir.path().join("from_flag");
    let manifest_dir = dir.path().join("from_manifest");
    let text = betlab::cli::bundled("counterexamples").unwrap().source.replacen(
        "{",
        &format!("{{ \"output_dir\": {},", serde_json::to_string(manifest_dir.to_str().unwrap()).unwrap()),
        1,
    );
    let path = write_manifest(dir.path(), "with_dir.json", &text);

    assert_eq!(code(&betlab(&["run", &path], None)), EXIT_OK);
    assert!(manifest_dir.join("results.csv").is_file());

    assert_eq!(code(&betlab(&["run", &path], Some(&env_dir))), EXIT_OK);
    assert!(env_dir.join("results.csv").is_file());

    assert_eq!(code(&betlab(&["run", &path, "--out", flag_dir.to_str().unwrap()], Some(&env_dir))), EXIT_OK);
    assert!(flag_dir.join("results.csv").is_file());
}
