use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levy-ito"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn config(model: &str, functional: &str, run: &str, verifier: &str) -> String {
    format!(
        r#"{{
  "schema_version": 1,
  "model": {model},
  "functional": {functional},
  "run": {run},
  "verifier": "{verifier}"
}}"#
    )
}

const BM: &str = r#"{ "drift": [0.0], "covariance": [1.0] }"#;
const JUMPY: &str = r#"{ "drift": [0.0], "covariance": [1.0], "jumps": [{ "distribution": "atom", "rate": 1.0, "at": [2.0] }] }"#;
const SQUARE: &str = r#"{ "name": "terminal", "params": { "field": "square" } }"#;

#[test]
fn verify_linear_thm1_prints_exact_residual() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &config(BM, r#"{ "name": "linear", "params": { "c": [1.5] } }"#, r#"{ "steps": 256, "paths": 16, "seed": 1 }"#, "thm1"),
    );
    let out = dir.path().join("out");
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let line = stdout.lines().find(|l| l.trim_start().starts_with("residual ")).unwrap();
    assert!(line.ends_with("0 (exact)"), "{line}");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["config"]["run"]["seed"], 1);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let jumps = write_config(dir.path(), "j.json", &config(JUMPY, SQUARE, r#"{ "steps": 64, "paths": 4, "seed": 0 }"#, "thm1"));
    let o = run(&["verify", "--config", jumps.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("hypothesis"));

    let singular = write_config(
        dir.path(),
        "s.json",
        &config(
            r#"{ "drift": [0.0, 0.0], "covariance": [1.0, 0.0, 0.0, 0.0] }"#,
            r#"{ "name": "quadratic" }"#,
            r#"{ "steps": 64, "paths": 4, "seed": 0 }"#,
            "thm4_invertible",
        ),
    );
    assert_eq!(code(&run(&["verify", "--config", singular.to_str().unwrap(), "--out", out])), 2);

    let typo = write_config(dir.path(), "t.json", &config(BM, SQUARE, r#"{ "steps": 64, "paths": 4, "sed": 0 }"#, "thm3"));
    let o = run(&["verify", "--config", typo.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 5"), "{}", String::from_utf8_lossy(&o.stderr));

    let k = write_config(dir.path(), "k.json", &config(BM, SQUARE, r#"{ "steps": 100, "paths": 4, "seed": 0 }"#, "thm3"));
    assert_eq!(code(&run(&["verify", "--config", k.to_str().unwrap(), "--out", out])), 3);

    assert_eq!(code(&run(&["verify", "--config", "/nonexistent/config.json"])), 3);
    assert_eq!(code(&run(&["frobnicate"])), 3);
    assert_eq!(code(&run(&["--help"])), 0);

    // A sweep whose fitted slope misses the expected range is an assertion failure.
    let sweep = write_config(
        dir.path(),
        "f.json",
        &config(BM, SQUARE, r#"{ "steps": 256, "paths": 64, "seed": 0, "convergence_steps": [256, 512, 1024], "expected_slope": [1.0, 2.0] }"#, "thm1"),
    );
    assert_eq!(code(&run(&["convergence", "--config", sweep.to_str().unwrap(), "--out", out])), 1);
}

#[test]
fn simulate_writes_paths_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "z.json",
        &config(r#"{ "drift": [0.0], "covariance": [0.0] }"#, SQUARE, r#"{ "steps": 64, "paths": 1, "seed": 9 }"#, "thm3"),
    );
    let out = dir.path().join("z");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("path_00000.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("knot_index,time,x_1,is_jump,left_1"));
    assert!(lines.all(|l| l.ends_with(",0.0,0,0.0")));
    assert!(out.join("manifest.json").exists());
    assert!(!out.join("report.json").exists());
}

#[test]
fn simulate_is_byte_identical_and_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &config(JUMPY, SQUARE, r#"{ "steps": 128, "paths": 4, "seed": 5 }"#, "thm3"));
    let c = cfg.to_str().unwrap();
    let mut manifests = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let out = dir.path().join(name);
        assert_eq!(code(&run(&["simulate", "--config", c, "--workers", workers, "--out", out.to_str().unwrap()])), 0);
        manifests.push(std::fs::read(out.join("manifest.json")).unwrap());
        assert_eq!(std::fs::read(out.join("path_00003.csv")).unwrap(), std::fs::read(dir.path().join("a/path_00003.csv")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
    assert_eq!(manifests[0], manifests[2]);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &config(JUMPY, SQUARE, r#"{ "steps": 64, "paths": 4, "seed": 5 }"#, "thm3"));
    let out = dir.path().join("o");
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--seed", "77", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["run"]["seed"], 77);
    assert_eq!(report["result"][0]["seed"], 77);
}

#[test]
fn csv_format_and_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", "{ \"schema_version\": 1,\n  \"model\": ");
    assert_eq!(code(&run(&["verify", "--config", cfg.to_str().unwrap()])), 3);

    let cfg = write_config(
        dir.path(),
        "k.json",
        &config(JUMPY, r#"{ "name": "constant", "params": { "value": 3.0 } }"#, r#"{ "steps": 64, "paths": 4, "seed": 0, "convergence_steps": [64, 128, 256] }"#, "thm4"),
    );
    let out = dir.path().join("k");
    let o = run(&["convergence", "--config", cfg.to_str().unwrap(), "--format", "csv", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("degenerate"));
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("K,residual_rms,se"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn localtime_check_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "l.json",
        &config(BM, r#"{ "name": "terminal_identity" }"#, r#"{ "steps": 512, "paths": 64, "seed": 2 }"#, "thm1"),
    );
    let out = dir.path().join("l");
    let o = run(&["localtime-check", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "localtime-check");
    assert_eq!(report["result"][0]["estimates"].as_array().unwrap().len(), 3);
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(root).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(&p).unwrap();
            levy_ito::config::ExperimentConfig::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}
