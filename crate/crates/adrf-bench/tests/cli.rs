use std::collections::HashSet;
use std::path::Path;
use std::process::Command;

use adrf_bench::aggregate::{SummaryRow, SUMMARY_HEADER};
use adrf_bench::cli::run;
use adrf_bench::rows::{read_csv, CurveRow, ResultRow, TailRow, CURVE_HEADER, RESULT_HEADER, TAIL_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adrf-bench"))
}

fn small_sweep(out: &Path, jobs: &str) -> i32 {
    let out = out.to_str().unwrap();
    run([
        "adrf-bench", "main-sweep", "--quiet", "--out", out, "--n", "200", "--seeds", "2", "--dgp", "parabola,sinusoidal_heavytail",
        "--p", "0,0.2", "--jobs", jobs,
    ])
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(bin().arg("no-such-preset").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["main-sweep", "--jobs", "0"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["main-sweep", "--p", "abc"]).output().unwrap().status.code(), Some(2));
}

#[test]
fn invalid_overrides_fail_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["main-sweep", "--quiet", "--dgp", "nonsense", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("adrf-bench: "));
}

#[test]
fn evt_suite_writes_six_estimator_rows() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin().args(["evt-suite", "--quiet", "--dgp", "sinusoidal_heavytail", "--out"]).arg(dir.path()).status().unwrap();
    assert!(status.success());
    let rows: Vec<TailRow> = read_csv(&dir.path().join("tail_report.csv"), &TAIL_HEADER).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.status == "ok"), "{rows:?}");
    assert!(dir.path().join("tail_curves.csv").exists());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("tail_reports.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 1);
}

#[test]
fn sweep_tables_round_trip_and_cover_each_cell_once() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(small_sweep(dir.path(), "1"), 0);
    let rows: Vec<ResultRow> = read_csv(&dir.path().join("verification_results.csv"), &RESULT_HEADER).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 7 * 2);
    let keys: HashSet<_> = rows.iter().map(|r| (r.dgp.clone(), r.p_contam.to_bits(), r.method.clone(), r.seed)).collect();
    assert_eq!(keys.len(), rows.len());
    assert!(rows.iter().all(|r| r.is_ok() && r.rmse_level.is_some()));
    let curves: Vec<CurveRow> = read_csv(&dir.path().join("main_sweep_curves.csv"), &CURVE_HEADER).unwrap();
    assert_eq!(curves.len(), rows.len() * 40);

    let input = dir.path().join("verification_results.csv");
    assert_eq!(run(["adrf-bench", "aggregate", "--out", dir.path().to_str().unwrap(), input.to_str().unwrap()]), 0);
    let summary: Vec<SummaryRow> = read_csv(&dir.path().join("summary.csv"), &SUMMARY_HEADER).unwrap();
    assert!(summary.iter().filter(|s| s.metric == "rmse_level").all(|s| s.count == 2));
    assert!(summary.iter().any(|s| s.metric == "rmse_level"));
    assert!(std::fs::read_to_string(dir.path().join("summary.md")).unwrap().contains("**"));
}

#[test]
fn reruns_and_thread_counts_give_identical_bytes() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, jobs) in dirs.iter().zip(["1", "1", "2"]) {
        assert_eq!(small_sweep(d.path(), jobs), 0);
    }
    for name in ["verification_results.csv", "main_sweep_curves.csv"] {
        let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(name)).unwrap();
        assert_eq!(read(&dirs[0]), read(&dirs[1]), "{name} differs between reruns");
        assert_eq!(read(&dirs[0]), read(&dirs[2]), "{name} differs between 1 and 2 jobs");
    }
}

#[test]
fn a_corrupted_table_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "preset,method\nx,y\n").unwrap();
    let err = read_csv::<ResultRow>(&path, &RESULT_HEADER).unwrap_err();
    assert!(err.to_string().starts_with("schema:"), "{err}");
}
