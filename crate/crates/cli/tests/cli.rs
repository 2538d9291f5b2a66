use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn mk() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mk"));
    cmd.env_remove("MK_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    mk().args(args).output().expect("mk runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "mk {args:?} failed: {}", stderr(&out));
    stdout(&out)
}

/// `n` rows of two features in [0, 1) from a fixed low-discrepancy sequence,
/// with target `sin(6 a) + b / 2`.
fn dataset(dir: &TempDir, n: usize) -> PathBuf {
    let mut text = String::from("a,b,y\n");
    for i in 0..n {
        let a = (i as f64 * 0.618_033_988_749_895).fract();
        let b = (i as f64 * 0.414_213_562_373_095).fract();
        text.push_str(&format!("{a},{b},{}\n", (6.0 * a).sin() + 0.5 * b));
    }
    let path = dir.path().join("data.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(schema_name: &str, doc: &Value) {
    let v = schema(schema_name);
    let errors: Vec<String> = v.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:?}");
}

#[test]
fn forest_path_is_byte_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, 120);
    let args = ["forest-path", "--data", s(&data), "--lifetime", "4", "--trees", "6", "--seed", "11"];
    let first = ok(&args);
    assert_eq!(first, ok(&args));
    for threads in ["1", "3"] {
        let out = mk().args(args).env("MK_THREADS", threads).output().unwrap();
        assert!(out.status.success());
        assert_eq!(stdout(&out), first);
    }
    assert_ne!(first, ok(&["forest-path", "--data", s(&data), "--lifetime", "4", "--trees", "6", "--seed", "12"]));
}

#[test]
fn kernel_path_and_grid_search_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, 80);
    let kernel = ["kernel-path", "--data", s(&data), "--lifetime", "3", "--trees", "4", "--seed", "2"];
    assert_eq!(ok(&kernel), ok(&kernel));
    let grid = ["grid-search", "--data", s(&data), "--trees", "2", "--budget", "4", "--seed", "2"];
    assert_eq!(ok(&grid), ok(&grid));
}

#[test]
fn zero_lifetime_gives_single_point_paths() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, 50);
    let forest: Value = serde_json::from_str(&ok(&[
        "forest-path", "--data", s(&data), "--lifetime", "0", "--trees", "3", "--seed", "1",
    ]))
    .unwrap();
    assert_eq!(forest.as_array().unwrap().len(), 1);
    assert_eq!(forest[0]["lifetime"], 0.0);
    let kernel: Value = serde_json::from_str(&ok(&[
        "kernel-path", "--data", s(&data), "--lifetime", "0", "--trees", "3", "--seed", "1",
    ]))
    .unwrap();
    assert_eq!(kernel.as_array().unwrap().len(), 1);
    assert_eq!(kernel[0]["num_features"], 3);
}

#[test]
fn forest_path_starts_at_zero_and_is_ordered() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, 100);
    let path: Value = serde_json::from_str(&ok(&[
        "forest-path", "--data", s(&data), "--lifetime", "5", "--trees", "4", "--seed", "9",
    ]))
    .unwrap();
    let lifetimes: Vec<f64> = path.as_array().unwrap().iter().map(|p| p["lifetime"].as_f64().unwrap()).collect();
    assert_eq!(lifetimes[0], 0.0);
    assert!(lifetimes.windows(2).all(|w| w[0] <= w[1]));
    assert!(lifetimes.iter().all(|&l| l <= 5.0));
}

#[test]
fn compare_exact_column_is_constant_across_tree_counts() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, 200);
    let rows: Value = serde_json::from_str(&ok(&[
        "compare-exact", "--data", s(&data), "--lifetime", "1,4", "--trees", "1,5,20", "--seed", "3",
    ]))
    .unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 6);
    for chunk in rows.chunks(3) {
        let exact = &chunk[0]["rmse_exact"];
        assert!(chunk.iter().all(|r| &r["rmse_exact"] == exact));
        assert!(chunk.iter().all(|r| r["lifetime"] == chunk[0]["lifetime"]));
    }
}

#[test]
fn outputs_match_checked_in_schemas() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, 60);
    let d = s(&data);
    let parse = |text: String| -> Value { serde_json::from_str(&text).unwrap() };
    assert_valid(
        "tree.schema.json",
        &parse(ok(&["sample", "--box", "0:1,0:2", "--lifetime", "2", "--seed", "5"])),
    );
    assert_valid(
        "forest_path.schema.json",
        &parse(ok(&["forest-path", "--data", d, "--lifetime", "3", "--trees", "3", "--seed", "5"])),
    );
    assert_valid(
        "kernel_path.schema.json",
        &parse(ok(&["kernel-path", "--data", d, "--lifetime", "3", "--trees", "3", "--seed", "5"])),
    );
    let trace = parse(ok(&["grid-search", "--data", d, "--trees", "2", "--budget", "3", "--seed", "5"]));
    assert!(!trace.as_array().unwrap().is_empty());
    assert_valid("trace.schema.json", &trace);
    let bidir = parse(ok(&[
        "grid-search", "--data", d, "--trees", "2", "--budget", "3", "--optimizer", "bidir", "--seed", "5",
    ]));
    assert_valid("trace.schema.json", &bidir);
    assert_valid(
        "compare.schema.json",
        &parse(ok(&["compare-exact", "--data", d, "--lifetime", "2", "--trees", "1,3", "--seed", "5"])),
    );
    let query = dir.path().join("q.csv");
    std::fs::write(&query, "a,b\n0.5,0.5\n0.1,0.9\n").unwrap();
    assert_valid(
        "predictions.schema.json",
        &parse(ok(&["predict", "--data", d, "--query", s(&query), "--lifetime", "2", "--seed", "5"])),
    );
    let reports = ok(&["verify", "--suite", "clocks", "--seed", "5"]);
    for line in reports.lines() {
        assert_valid("verify_report.schema.json", &parse(line.to_string()));
    }
}

#[test]
fn provenance_header_goes_to_stderr() {
    let out = run(&["sample", "--box", "0:1", "--lifetime", "1", "--seed", "4"]);
    let header: Value = serde_json::from_str(stderr(&out).lines().next().unwrap()).unwrap();
    assert_eq!(header["defaults"]["split"], 0.8);
    assert_eq!(header["defaults"]["delta"], 1.0);
    assert_eq!(header["command"]["sample"]["seed"], 4);
    let tree: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(tree["lifetime"], 1.0);
}

#[test]
fn csv_format_and_out_file() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, 40);
    let out_path = dir.path().join("path.csv");
    let printed = ok(&[
        "kernel-path", "--data", s(&data), "--lifetime", "2", "--trees", "2", "--seed", "1", "--format", "csv",
        "--out", s(&out_path),
    ]);
    assert!(printed.is_empty());
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.starts_with("lifetime,rmse_train,rmse_val,num_features\n"));
    let csv_lines = text.lines().count() - 1;
    let json: Value = serde_json::from_str(&ok(&[
        "kernel-path", "--data", s(&data), "--lifetime", "2", "--trees", "2", "--seed", "1",
    ]))
    .unwrap();
    assert_eq!(csv_lines, json.as_array().unwrap().len());
}

#[test]
fn bad_csv_cell_is_a_validation_error_naming_line_and_column() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,b,y\n1,2,3\n4,abc,6\n7,8,9\n").unwrap();
    let out = run(&["forest-path", "--data", s(&path), "--lifetime", "1", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("line 3") && err.contains("\"b\"") && err.contains("abc"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, 30);
    let missing = dir.path().join("missing.csv");
    let code = |args: &[&str]| run(args).status.code();
    assert_eq!(code(&["forest-path", "--data", s(&missing), "--lifetime", "1", "--seed", "1"]), Some(2));
    assert_eq!(code(&["forest-path", "--data", s(&data), "--seed", "1"]), Some(1));
    assert_eq!(code(&["forest-path", "--data", s(&data), "--lifetime", "1", "--seed", "1", "--split", "1.5"]), Some(1));
    assert_eq!(code(&["forest-path", "--data", s(&data), "--lifetime", "-1", "--seed", "1"]), Some(1));
    assert_eq!(code(&["kernel-path", "--data", s(&data), "--lifetime", "1", "--seed", "1", "--delta", "0"]), Some(1));
    assert_eq!(code(&["grid-search", "--data", s(&data), "--seed", "1", "--budget", "0"]), Some(1));
    assert_eq!(code(&["verify", "--suite", "nonsense", "--seed", "1"]), Some(1));
    assert_eq!(code(&["sample", "--box", "1:0", "--lifetime", "1", "--seed", "1"]), Some(1));
    assert_eq!(code(&["--help"]), Some(0));
    let threads = mk()
        .args(["sample", "--box", "0:1", "--lifetime", "1", "--seed", "1"])
        .env("MK_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(1));
}

#[test]
fn failing_verify_suite_exits_with_three() {
    let out = run(&["verify", "--suite", "clocks", "--seed", "1", "--alpha", "0.999999"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).lines().any(|l| l.contains("\"passed\":false")));
}

#[test]
fn predict_counts_clamped_query_points() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, 50);
    let query = dir.path().join("q.csv");
    std::fs::write(&query, "0.5,0.5\n2.0,0.5\n-1,-1\n").unwrap();
    let out = run(&[
        "predict", "--data", s(&data), "--query", s(&query), "--query-no-header", "--lifetime", "2", "--seed", "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("\"clamped\":2"));
    let preds: Vec<f64> = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(preds.len(), 3);
}
