use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cellrecon::catalog::{discretize, TestFunction};
use cellrecon::grid::CellGrid;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellrecon")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_grid(p: PathBuf) -> CellGrid {
    CellGrid::read_csv(&p).unwrap()
}

/// `(x, y, value)` rows of an `evaluation.csv`.
fn evaluation(dir: &Path) -> Vec<[f64; 3]> {
    fs::read_to_string(dir.join("evaluation.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect()
}

#[test]
fn gen_step_halves() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen", "--function", "step", "--n", "8", "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let g = read_grid(dir.path().join("step_n8.csv"));
    assert_eq!(g.values().len(), 64);
    for j in 1..=8 {
        for i in 1..=8 {
            let want = if i <= 4 { 0.0 } else { 1.0 };
            assert!((g.get(i, j) - want).abs() <= 1e-14);
        }
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("step_n8.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n"], 8);
    assert_eq!(manifest["quadrature_warnings"], 0);
}

#[test]
fn gen_smooth_matches_library_discretization() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen", "--function", "smooth", "--n", "16", "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 0);
    let g = read_grid(dir.path().join("smooth_n16.csv"));
    let want = discretize(&TestFunction::smooth(), 16, 6).unwrap();
    assert!(g.max_abs_diff(&want) <= 1e-10);
}

#[test]
fn gen_open_quarter_circle_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen", "--n", "40", "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("open-quarter-circle_n40.manifest.json")).unwrap()).unwrap();
    // Golden value recorded from a verified run.
    assert_eq!(manifest["sha256"], "6793dae54ef1cc37a273dad6a01814abfebab225a6ac99cc0af42056f6744d34");
    let g = read_grid(dir.path().join("open-quarter-circle_n40.csv"));
    // Below the curve the averages of x + y grow along each row.
    for j in 1..=10 {
        for i in 1..10 {
            assert!(g.get(i + 1, j) > g.get(i, j));
        }
    }
}

#[test]
fn pipeline_reproduces_a_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["pipeline", "--function", "step", "--n", "16", "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let bundle = dir.path().join("step_n16");
    for f in [
        "grid.csv",
        "partition.json",
        "arcs.json",
        "points.csv",
        "curve_first.csv",
        "curve.csv",
        "curve_spline.json",
        "side1_spline.json",
        "side2_spline.json",
        "evaluation.csv",
        "manifest.json",
    ] {
        assert!(bundle.join(f).exists(), "{f}");
    }
    let rows = evaluation(&bundle);
    assert_eq!(rows.len(), 65 * 65);
    for [x, y, v] in rows {
        if (x - 0.5).abs() < 1e-9 {
            assert!(v.abs() <= 1e-12 || (v - 1.0).abs() <= 1e-12, "({x}, {y}) {v}");
        } else {
            let want = if x < 0.5 { 0.0 } else { 1.0 };
            assert!((v - want).abs() <= 1e-12, "({x}, {y}) {v}");
        }
    }
}

#[test]
fn pipeline_on_smooth_data_has_one_side() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["pipeline", "--function", "smooth", "--n", "16", "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 0);
    let bundle = dir.path().join("smooth_n16");
    assert!(bundle.join("side1_spline.json").exists());
    assert!(!bundle.join("side2_spline.json").exists());
    assert!(!bundle.join("curve.csv").exists());
}

#[test]
fn zero_grid_fails_at_detection() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("zero.csv");
    CellGrid::from_fn(16, |_, _| 0.0).unwrap().write_csv(&input).unwrap();
    let out = run(&["pipeline", "--n", "16", "--input", path_str(&input), "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("detection"));
}

#[test]
fn bad_usage_exits_64() {
    let dir = tempfile::tempdir().unwrap();
    let d = path_str(dir.path());
    assert_eq!(code(&run(&["gen", "--n", "4", "--out", d])), 64);
    assert_eq!(code(&run(&["gen", "--function", "square", "--n", "16", "--out", d])), 64);
    assert_eq!(code(&run(&["gen", "--out", d])), 64);
    assert_eq!(code(&run(&["frobnicate"])), 64);
    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&run(&["pipeline", "--n", "16", "--input", path_str(&missing), "--out", d])), 64);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn unwritable_output_exits_74() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let out = run(&["gen", "--function", "step", "--n", "8", "--out", path_str(&blocker.join("sub"))]);
    assert_eq!(code(&out), 74);
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn pipeline_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["pipeline", "--function", "closed-circle", "--n", "24", "--out", path_str(dir.path())];
    assert_eq!(code(&run(&args)), 0);
    let first = snapshot(&dir.path().join("closed-circle_n24"));
    fs::remove_dir_all(dir.path().join("closed-circle_n24")).unwrap();
    assert_eq!(code(&run(&args)), 0);
    let second = snapshot(&dir.path().join("closed-circle_n24"));
    assert!(first.len() > 5);
    assert_eq!(first, second);
}

#[test]
fn benchmark_with_one_resolution_has_no_orders() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["benchmark", "--function", "closed-circle", "--n", "32", "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("benchmark_closed-circle.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("n,first_hausdorff"));
    let cells: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(cells[0], "32");
    assert!(cells[1..7].iter().all(|c| !c.is_empty()));
    assert!(cells[7..].iter().all(|c| c.is_empty()));
}
