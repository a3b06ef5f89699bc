// End-to-end tests of the `kinetic-games` binary: exit codes, overrides and
// byte-identical reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kinetic_games::experiments::{read_summary, RunStatus};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kinetic-games"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"))
}

fn run(name: &str, out: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg(config(name)).arg("--out").arg(out).args(extra).output().unwrap()
}

/// Every file under `dir` except `summary.json`, whose `metadata` holds wall-clock times.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "summary.json" {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn list_and_validate() {
    let out = bin().arg("list-experiments").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["two_strategies", "grazing", "rps_periodic", "folk_check", "meanfield_vs_replicator", "micro_free_run"] {
        assert!(text.contains(name), "{name} missing from {text}");
    }
    for name in ["two_strategies", "grazing", "rps_periodic", "folk_check", "meanfield_vs_replicator", "micro_free_run"] {
        let out = bin().arg("validate").arg(config(name)).output().unwrap();
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"schema_version": 1, "experiment": "folk_check", "game": {"kind": "cyclic", "d": 3}, "surprise": 1}"#)
        .unwrap();
    assert_eq!(bin().arg("validate").arg(&bad).status().unwrap().code(), Some(2));
    fs::write(&bad, r#"{"schema_version": 7, "experiment": "folk_check", "game": {"kind": "cyclic", "d": 3}}"#).unwrap();
    assert_eq!(bin().arg("validate").arg(&bad).status().unwrap().code(), Some(2));
    let out = run("folk_check", &dir.path().join("o"), &["--override", "thresholds.no_such=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn passing_run_exits_zero_and_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("folk_check", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let s = read_summary(dir.path()).unwrap();
    assert_eq!(s.status, RunStatus::Passed);
    assert_eq!(s.experiment, "folk_check");
    assert_eq!(s.config_hash.len(), 64);
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // a gap threshold no finite computation meets
    let out = run("meanfield_vs_replicator", dir.path(), &["--override", "thresholds.gap_max=-1", "--override", "dynamics.t_end=0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(read_summary(dir.path()).unwrap().status, RunStatus::Failed);
}

#[test]
fn runtime_error_exits_two_with_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("folk_check", dir.path(), &["--override", r#"game={"kind":"two-strategy","b":1}"#, "--override", "control_point=null"]);
    assert_eq!(out.status.code(), Some(2));
    let s = read_summary(dir.path()).unwrap();
    assert_eq!(s.status, RunStatus::Error);
    assert!(s.error.is_some());
}

#[test]
fn seed_override_changes_hash_and_is_recorded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let small = ["--override", "dynamics.n=50", "--override", "dynamics.t_end=5"];
    assert!(run("micro_free_run", a.path(), &small).status.success());
    let mut args = small.to_vec();
    args.extend(["--seed", "1234"]);
    assert!(run("micro_free_run", b.path(), &args).status.success());
    let (sa, sb) = (read_summary(a.path()).unwrap(), read_summary(b.path()).unwrap());
    assert_eq!(sb.seed, 1234);
    assert_ne!(sa.config_hash, sb.config_hash);
    assert_ne!(tree(a.path()), tree(b.path()));
}

#[test]
fn reruns_are_byte_identical() {
    let cases: [(&str, &[&str]); 3] = [
        ("micro_free_run", &["--override", "dynamics.n=200", "--override", "dynamics.t_end=10"]),
        ("two_strategies", &["--override", "dynamics.t_end=20"]),
        (
            "grazing",
            &["--override", "dynamics.n=300", "--override", "dynamics.t_end=1", "--override", "dynamics.n_seeds=3"],
        ),
    ];
    for (name, extra) in cases {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assert!(run(name, a.path(), extra).status.code().unwrap() < 2);
        assert!(run(name, b.path(), extra).status.code().unwrap() < 2);
        let (ta, tb) = (tree(a.path()), tree(b.path()));
        assert!(!ta.is_empty());
        assert_eq!(ta, tb, "{name} artifacts differ between reruns");
        let (mut sa, mut sb) = (read_summary(a.path()).unwrap(), read_summary(b.path()).unwrap());
        sa.metadata.clear();
        sb.metadata.clear();
        sa.config["output_dir"] = serde_json::Value::Null;
        sb.config["output_dir"] = serde_json::Value::Null;
        assert_eq!(sa.scalars, sb.scalars);
        assert_eq!(sa.checks, sb.checks);
        assert_eq!(sa.config, sb.config);
    }
}
