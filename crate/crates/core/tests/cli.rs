use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kkbrane(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kkbrane"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(kkbrane(&["bogus"]).status.code(), Some(2));
    assert_eq!(
        kkbrane(&["verify", "x.json", "--frobnicate"]).status.code(),
        Some(2)
    );
    assert_eq!(kkbrane(&[]).status.code(), Some(2));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"scenario": "chiral_loop", "mu": 2}"#);
    let out = kkbrane(&["verify", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`mu`"));
    let cfg = write_config(
        dir.path(),
        "neg.json",
        r#"{"scenario": "chiral_loop", "g44": -1}"#,
    );
    let out = kkbrane(&["verify", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("g44"));
}

#[test]
fn verify_flat_sheet_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "flat.json", r#"{"scenario": "flat_sheet"}"#);
    let out_dir = dir.path().join("v");
    let out = kkbrane(&["verify", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(out_dir.join("report.json").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("ALL PASS"));
}

#[test]
fn failing_checks_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "flat.json", r#"{"scenario": "chiral_loop", "n": 32}"#);
    let out = kkbrane(&["verify", &cfg, "--tol-scale", "1e-9"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL "));
}

#[test]
fn zero_step_run_writes_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"scenario": "chiral_loop", "n": 64, "steps": 0}"#,
    );
    let run = dir.path().join("run");
    let out = kkbrane(&["run", &cfg, "--out", run.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let diag = fs::read_to_string(run.join("diagnostics.csv")).unwrap();
    let charges = fs::read_to_string(run.join("charges.csv")).unwrap();
    assert_eq!(diag.lines().count(), 2);
    assert_eq!(charges.lines().count(), 2);
    assert!(charges.starts_with("tau,P0,"));

    let rep = kkbrane(&["report", run.to_str().unwrap()]);
    assert_eq!(rep.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&rep.stdout).contains("run chiral_loop"));
}

#[test]
fn report_of_missing_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = kkbrane(&["report", dir.path().join("nope").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"scenario": "nonchiral_loop", "n": 64, "steps": 100, "cadence": 25}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = kkbrane(&["run", &cfg, "--out", d.to_str().unwrap(), "--seed", "5"]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["charges.csv", "diagnostics.csv", "report.json", "report.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn cadence_flag_controls_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"scenario": "flat_sheet", "n": 32, "steps": 12}"#,
    );
    let run = dir.path().join("run");
    let out = kkbrane(&["run", &cfg, "--out", run.to_str().unwrap(), "--cadence", "5"]);
    assert_eq!(out.status.code(), Some(0));
    // steps 0, 5, 10 and the final 12
    let diag = fs::read_to_string(run.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 5);
}

#[test]
fn sweep_reports_orders() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"scenario": "circular_loop"}"#);
    let out = kkbrane(&["sweep", &cfg, "--grids", "32,64"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("gauss_weingarten_order"));
}
