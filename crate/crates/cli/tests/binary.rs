use std::path::PathBuf;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saferegion"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name].iter().collect();
    p.display().to_string()
}

#[test]
fn check_accepts_shipped_scenario() {
    let out = bin(&["check", &scenario("nominal.toml")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 violation(s)"));
}

#[test]
fn check_rejects_bad_override() {
    let out = bin(&["check", &scenario("nominal.toml"), "--override", "params.eta=-1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_file_is_an_io_error() {
    let out = bin(&["run", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_writes_tables_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("bundle");
    let out = bin(&[
        "run",
        &scenario("single_obstacle.toml"),
        "--duration",
        "0.5",
        "--plot",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trajectory.csv", "metrics.csv", "events.csv"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let svgs = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count();
    assert!(svgs > 0);
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 502);
}
