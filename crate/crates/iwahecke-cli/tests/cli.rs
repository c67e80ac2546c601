//! End-to-end checks of the `verify` binary: config parsing, report
//! emission, exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_verify"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn config_file_run_emits_report_and_exits_zero() {
    let dir = tempdir();
    let cfg = dir.join("run.toml");
    write(
        &cfg,
        r#"
p = 7
f = 1
e = 1
r = 3
depth = 2
suites = ["carry", "hecke-relations"]
"#,
    );
    let out = dir.join("report.json");
    let status = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{status:?}");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["failures"], 0);
    assert_eq!(report["params"]["q"], 7);
    let stdout = String::from_utf8(status.stdout).unwrap();
    assert!(stdout.contains("PASS"), "{stdout}");
}

#[test]
fn direct_flags_run() {
    let status = bin()
        .args(["--p", "7", "--f", "1", "--e", "1", "--r", "3"])
        .args(["--depth", "2", "--suite", "carry"])
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn malformed_config_reports_location_and_exits_2() {
    let dir = tempdir();
    let cfg = dir.join("bad.toml");
    write(&cfg, "p = 7\nf = \"not a number\"\n");
    let out = bin().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2"), "missing location diagnostics: {err}");
}

#[test]
fn unknown_suite_exits_2() {
    let out = bin()
        .args(["--p", "7", "--f", "1", "--e", "1", "--r", "3"])
        .args(["--suite", "bogus"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bogus"));
}

#[test]
fn missing_parameters_exit_2() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flagged_run_exits_zero() {
    // r = 3 at p = 3, f = 2 has a zero digit: suites run flagged, not failed.
    let out = bin()
        .args(["--p", "3", "--f", "2", "--e", "1", "--r", "3"])
        .args(["--depth", "2", "--suite", "eigencharacters"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("FLAGGED"), "{stdout}");
    assert!(stdout.contains("outside hypotheses"), "{stdout}");
}

#[test]
fn dump_matrices_writes_csv() {
    let dir = tempdir();
    let dump = dir.join("dump");
    let status = bin()
        .args(["--p", "7", "--f", "1", "--e", "1", "--r", "3"])
        .args(["--depth", "2"])
        .args(["--suite", "carry"])
        .arg("--dump-matrices")
        .arg(&dump)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dump.join("T_minus-matrix-t2.csv").exists());
    assert!(dump.join("kernel-dims.csv").exists());
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "iwahecke-cli-test-{}-{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
