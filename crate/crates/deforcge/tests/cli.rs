//! End-to-end checks of the command-line interface: exit codes, error
//! records, artifact presence, determinism, and the report round-trip.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn data(file: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(file)
        .display()
        .to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deforcge"))
        .args(args)
        .env("DEFORCGE_LOG", "warn")
        .output()
        .unwrap()
}

/// One calibration shared by the CLI tests (it bisects full baselines).
fn bundle() -> &'static PathBuf {
    static CELL: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, path) = CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.json");
        let out = run(&[
            "calibrate",
            "--sam",
            &data("sam.csv"),
            "--elasticities",
            &data("elasticities.csv"),
            "--factors",
            &data("factors.csv"),
            "--projections",
            &data("projections.csv"),
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (dir, path)
    });
    path
}

#[test]
fn validate_accepts_the_bundled_sam() {
    let out = run(&["validate", "--sam", &data("sam.csv")]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("balanced"), "stdout: {stdout}");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "stderr: {stderr}");
}

#[test]
fn module_errors_emit_a_machine_readable_record() {
    let out = run(&["validate", "--sam", "/definitely/not/there.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let record: serde_json::Value =
        serde_json::from_str(stderr.lines().last().unwrap()).expect("JSON error record");
    assert!(record["error"]["kind"].is_string());
    assert!(record["error"]["message"].is_string());
}

#[test]
fn shares_pipeline_matches_the_bundled_table() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("shares.csv");
    let out = run(&[
        "shares",
        "--transitions",
        &data("transitions.csv"),
        "--landuse",
        &data("landuse.csv"),
        "--census",
        &data("census.csv"),
        "--crops",
        &data("crops.csv"),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let produced = std::fs::read_to_string(&out_path).unwrap();
    let bundled = std::fs::read_to_string(data("shares.csv")).unwrap();
    assert_eq!(produced, bundled);
}

#[test]
fn sam_split_reproduces_the_bundled_sam() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("sam.csv");
    let out = run(&[
        "sam",
        "split",
        "--sam",
        &data("sam_aggregate.csv"),
        "--shares",
        &data("shares.csv"),
        "--linkage",
        &data("linkage.csv"),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read_to_string(&out_path).unwrap(),
        std::fs::read_to_string(data("sam.csv")).unwrap()
    );
}

#[test]
fn run_writes_deviation_reports_and_is_deterministic() {
    let params = bundle().to_str().unwrap().to_string();
    let make_run = |dir: &Path| {
        let out = run(&[
            "run",
            "--scenario",
            &data("scenario_eudr.toml"),
            "--params",
            &params,
            "--coefficients",
            &data("coefficients.csv"),
            "--sam",
            &data("sam.csv"),
            "--no-timestamp",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    make_run(d1.path());
    make_run(d2.path());
    for file in [
        "deviations_macro.csv",
        "deviations_commodity.csv",
        "emissions_decomposition.csv",
        "coverage.csv",
    ] {
        let a = std::fs::read(d1.path().join(file)).unwrap();
        let b = std::fs::read(d2.path().join(file)).unwrap();
        assert!(!a.is_empty(), "{file} empty");
        assert_eq!(a, b, "{file} differs between identical invocations");
    }

    // `report` re-renders the same artifacts from the stored trajectories.
    let rep = tempfile::tempdir().unwrap();
    let out = run(&[
        "report",
        "--baseline",
        d1.path().join("baseline").to_str().unwrap(),
        "--counterfactual",
        d1.path().join("trajectory").to_str().unwrap(),
        "--sam",
        &data("sam.csv"),
        "--window",
        "2025:2030",
        "--no-timestamp",
        "--out",
        rep.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in [
        "deviations_macro.csv",
        "deviations_commodity.csv",
        "emissions_decomposition.csv",
        "coverage.csv",
    ] {
        assert_eq!(
            std::fs::read(d1.path().join(file)).unwrap(),
            std::fs::read(rep.path().join(file)).unwrap(),
            "{file} differs after re-rendering"
        );
    }
}
