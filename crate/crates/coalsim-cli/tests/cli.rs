//! Black-box tests of the `coalsim` binary: exit codes, output files,
//! determinism, config validation, and the golden tables.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coalsim"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_a_csv_with_one_row_per_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("et.csv");
    let o = bin()
        .args(["erdos-taylor", "--t", "100", "--replicates", "50", "--seed", "3"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "stderr: {}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,t,alpha,beta,rho,gamma,delta,u,replicate,statistic,value,seed"
    );
    assert_eq!(lines.count(), 50);
    assert!(text.contains("no_meeting"));
}

#[test]
fn identical_invocations_produce_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = bin()
            .args(["theorem1", "--t", "50", "--replicates", "10", "--seed", "11"])
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert!(o.status.success(), "stderr: {}", stderr(&o));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn json_format_emits_a_parsable_summary() {
    let o = bin()
        .args([
            "sparse-recursion",
            "--alpha",
            "0.25",
            "--beta",
            "1.0",
            "--format",
            "json",
        ])
        .output()
        .unwrap();
    assert!(o.status.success(), "stderr: {}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["recursion_5_1"]["mean"].as_f64().is_some());
}

#[test]
fn validate_accepts_a_good_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("good.json");
    std::fs::write(&cfg, r#"{"scenario":"theorem1","t":50.0,"replicates":5}"#).unwrap();
    let o = bin().arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert!(o.status.success(), "stderr: {}", stderr(&o));
    assert!(stdout(&o).contains("ok: theorem1"));
}

#[test]
fn validate_rejects_a_bad_config_with_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"scenario":"theorem1","t":50.0,"gamma":0.0}"#).unwrap();
    let o = bin().arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "expected one-line reason: {err}");
    assert!(err.contains("gamma"), "reason should name the field: {err}");
}

#[test]
fn scenario_mismatch_between_config_and_subcommand_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mismatch.json");
    std::fs::write(&cfg, r#"{"scenario":"theorem1","t":50.0}"#).unwrap();
    let o = bin()
        .args(["theorem2", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not match"));
}

#[test]
fn checked_in_goldens_verify() {
    let goldens = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../goldens");
    let o = bin().arg("goldens").arg("--dir").arg(&goldens).output().unwrap();
    assert!(o.status.success(), "stderr: {}", stderr(&o));
    assert_eq!(stdout(&o).matches("golden ok:").count(), 2);
}

#[test]
fn golden_write_then_verify_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["goldens", "--write", "--dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "stderr: {}", stderr(&o));
    let o2 = bin().arg("goldens").arg("--dir").arg(dir.path()).output().unwrap();
    assert!(o2.status.success(), "stderr: {}", stderr(&o2));
}
