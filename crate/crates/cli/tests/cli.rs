use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn loewner(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loewner")).args(args).output().expect("binary runs")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn run(cmd: &str, scenario: &str, out: &Path, extra: &[&str]) -> (Output, Value) {
    let mut args = vec![cmd, "--scenario", scenario, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = loewner(&args);
    (o, summary(out))
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let (o, s) = run("evolve", "becker-k", d, &["--deterministic"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
        assert_eq!(s["runtime_ms"], 0);
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 3, "{names:?}");
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?} differs");
    }
}

#[test]
fn config_errors_are_aggregated_with_exit_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(
        &cfg,
        r#"{"name": "bad", "p": {"kind": "constant", "value": 1.0}, "tau": {"kind": "constant", "value": 0.0},
            "time": {"t_end": -1.0, "tol": 0.0}, "grid": {"angles": 1}}"#,
    )
    .unwrap();
    let o = loewner(&["evolve", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for needle in ["time.t_end", "time.tol", "grid.angles"] {
        assert!(err.contains(needle), "missing {needle} in:\n{err}");
    }
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = loewner(&["check", "--scenario", "nope", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_on_constant_p_has_zero_becker_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, s) = run("check", "exponential", tmp.path(), &[]);
    assert!(o.status.success());
    assert_eq!(s["pass"], true);
    assert_eq!(s["metrics"]["becker_ratio"].as_f64(), Some(0.0));
}

#[test]
fn becker_extension_stays_below_k() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, s) = run("extend", "becker-k", tmp.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let d = &s["metrics"]["dilatation"];
    assert!(d["max_mu_formula"].as_f64().unwrap() <= 0.52);
    assert!(d["max_mu_fd"].as_f64().unwrap() <= 0.52);
    for f in ["atlas.csv", "atlas_source.svg", "atlas_target.svg"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn chordal_range_is_the_plane() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, s) = run("range", "chordal-constant", tmp.path(), &[]);
    assert!(o.status.success());
    assert_eq!(s["metrics"]["classification"]["kind"], "plane");
    assert!(s["metrics"]["beta0"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn scenarios_print_as_loadable_configs() {
    let o = loewner(&["scenarios"]);
    let names = String::from_utf8(o.stdout).unwrap();
    assert_eq!(names.lines().count(), 7);
    for name in names.lines() {
        let json = loewner(&["scenarios", name]).stdout;
        let cfg = loewner_cli::parse_config_str(std::str::from_utf8(&json).unwrap(), "x").unwrap();
        assert_eq!(cfg.name, name);
    }
}
