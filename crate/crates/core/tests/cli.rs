use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zoomout")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, n: &str) -> String {
    let prefix = dir.join("pair");
    let out = run(&["synth", "--n", n, "--seed", "3", "--out-prefix", s(&prefix)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    s(&prefix).to_string()
}

#[test]
fn missing_mesh_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.off");
    let out = run(&["basis", "--mesh", s(&missing), "-k", "5", "--out", s(&dir.path().join("b"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.off"));
}

#[test]
fn unknown_flag_and_subcommand_exit_2() {
    assert_eq!(run(&["zoomout", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_config_is_a_computation_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = synth(dir.path(), "200");
    let fmap = dir.path().join("c.txt");
    let out = run(&[
        "convert", "--source", &format!("{p}_M.off"), "--target", &format!("{p}_N.off"),
        "--p2p", &format!("{p}_gt.txt"), "-k", "6", "--out", s(&fmap),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // kmax below k0 violates the schedule contract.
    let out = run(&[
        "zoomout", "--source", &format!("{p}_M.off"), "--target", &format!("{p}_N.off"),
        "--init-fmap", s(&fmap), "--k0", "6", "--kmax", "4",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn zoomout_writes_one_line_per_source_vertex() {
    let dir = tempfile::tempdir().unwrap();
    let p = synth(dir.path(), "642");
    let (m, n) = (format!("{p}_M.off"), format!("{p}_N.off"));
    let fmap = dir.path().join("c.txt");
    let out = run(&["convert", "--source", &m, "--target", &n, "--p2p", &format!("{p}_gt.txt"), "-k", "20", "--out", s(&fmap)]);
    assert!(out.status.success());
    let t = dir.path().join("t.txt");
    let trace = dir.path().join("trace.json");
    let out = run(&[
        "zoomout", "--source", &m, "--target", &n, "--init-fmap", s(&fmap), "--k0", "20", "--kmax", "60",
        "--step", "5", "--out-p2p", s(&t), "--trace", s(&trace),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&t).unwrap();
    assert_eq!(text.lines().count(), 642);
    assert_eq!(text, std::fs::read_to_string(format!("{p}_gt.txt")).unwrap());
    let records: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(records.as_array().unwrap().len(), 9);
    assert_eq!(records[0]["kM"], 20);
    assert_eq!(records[0]["millis"], 0.0);
}

#[test]
fn eval_on_identical_maps_reports_zero_error_with_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = synth(dir.path(), "200");
    let report = dir.path().join("r.json");
    let gt = format!("{p}_gt.txt");
    let out = run(&[
        "eval", "--source", &format!("{p}_M.off"), "--target", &format!("{p}_N.off"), "--map", &gt,
        "--gt", &gt, "--map-reverse", &format!("{p}_gt_rev.txt"), "--report", s(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["accuracy_mean"], 0.0);
    assert_eq!(r["bijectivity_mean"], 0.0);
    assert_eq!(r["uncoverage_percent"], 0.0);
    assert!(r["config"].is_object());
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn experiment_report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for r in [&a, &b] {
        let out = run(&[
            "experiment", "--name", "stability", "--n", "300", "--trials", "2", "--sigma", "0.1", "--kmax", "20",
            "--step", "2", "--report", s(r),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let r: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(r["config"]["pair"]["n"], 300);
    assert_eq!(r["config"]["refine"]["kmax_m"], 20);
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
}
