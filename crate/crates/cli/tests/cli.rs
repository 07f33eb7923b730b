use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lge_core::io::read_matrix;
use tempfile::TempDir;

fn lge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lge")).args(args).env_remove("LGE_CONFIG").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(dir: &Path, file: &str) -> String {
    dir.join(file).display().to_string()
}

fn gen(dir: &Path, extra: &[&str]) {
    let mut args = vec!["--seed", "3", "--out", dir.to_str().unwrap(), "gen"];
    args.extend_from_slice(extra);
    assert_eq!(code(&lge(&args)), 0);
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn gen_defaults_emit_a_30_by_50_dataset() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), &[]);
    let x = read_matrix(&dir.path().join("X.csv")).unwrap();
    assert_eq!(x.shape(), (30, 50));
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed=3") && manifest.contains("command=gen"));
}

#[test]
fn zero_density_means_no_corruption() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), &["-d", "0"]);
    assert!(read_matrix(&dir.path().join("M.csv")).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    gen(a.path(), &["-d", "0.2"]);
    gen(b.path(), &["-d", "0.2"]);
    assert_eq!(csv_files(a.path()), csv_files(b.path()));
}

#[test]
fn single_pass_without_graph_matches_rpca() {
    let data = TempDir::new().unwrap();
    gen(data.path(), &["-d", "0.1"]);
    let (x, phi) = (path(data.path(), "X.csv"), path(data.path(), "Phi0.csv"));
    let (solved, robust) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let s = lge(&["--out", solved.path().to_str().unwrap(), "solve", "--x", &x, "--graph", &phi, "--gamma", "0", "--outer", "1"]);
    let r = lge(&["--out", robust.path().to_str().unwrap(), "rpca", "--x", &x]);
    assert!([0, 2].contains(&code(&s)) && [0, 2].contains(&code(&r)));
    let a = read_matrix(&solved.path().join("L.csv")).unwrap();
    let b = read_matrix(&robust.path().join("L.csv")).unwrap();
    assert!((a - b).amax() <= 1e-8);
    let trace = fs::read_to_string(solved.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("outer_iter,objective,step1_residual,step2_residual,rank_L"));
}

#[test]
fn knn_initialization_runs() {
    let data = TempDir::new().unwrap();
    gen(data.path(), &["-d", "0.1"]);
    let out = TempDir::new().unwrap();
    let s = lge(&["--out", out.path().to_str().unwrap(), "solve", "--x", &path(data.path(), "X.csv"), "--knn", "5", "--outer", "2"]);
    assert!([0, 2].contains(&code(&s)));
    let phi = read_matrix(&out.path().join("Phi.csv")).unwrap();
    assert!(lge_core::graph::is_valid_laplacian(&phi, 1e-8));
}

#[test]
fn rpca_on_zero_input_returns_zeros() {
    let dir = TempDir::new().unwrap();
    let x = dir.path().join("zero.csv");
    fs::write(&x, "0,0,0\n0,0,0\n").unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&lge(&["--out", out.to_str().unwrap(), "rpca", "--x", x.to_str().unwrap()])), 0);
    for file in ["L.csv", "M.csv"] {
        assert!(read_matrix(&out.join(file)).unwrap().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn rpca_recovers_an_uncorrupted_lowrank_matrix() {
    let data = TempDir::new().unwrap();
    gen(data.path(), &["-d", "0"]);
    let out = TempDir::new().unwrap();
    let r = lge(&[
        "--out",
        out.path().to_str().unwrap(),
        "--set",
        "step1_max_iter=5000",
        "--set",
        "step1_tol=1e-9",
        "rpca",
        "--x",
        &path(data.path(), "X.csv"),
    ]);
    assert_eq!(code(&r), 0);
    let l = read_matrix(&out.path().join("L.csv")).unwrap();
    let l0 = read_matrix(&data.path().join("L0.csv")).unwrap();
    assert!(lge_core::synth::rel_error(&l, &l0).unwrap() <= 1e-3);
}

#[test]
fn usage_errors_exit_with_one() {
    let bad = lge(&["gen", "--no-such-flag"]);
    assert_eq!(code(&bad), 1);

    let kind = lge(&["--out", "/nonexistent/never", "sweep", "table9"]);
    assert_eq!(code(&kind), 1);
    let msg = String::from_utf8_lossy(&kind.stderr);
    assert!(msg.contains("table2") && msg.contains("sensitivity"), "{msg}");

    assert_eq!(code(&lge(&["--help"])), 0);
}

#[test]
fn malformed_csv_names_the_offending_cell() {
    let dir = TempDir::new().unwrap();
    let x = dir.path().join("x.csv");
    fs::write(&x, "1,2,3\n4,oops,6\n").unwrap();
    let out = lge(&["--out", dir.path().join("o").to_str().unwrap(), "rpca", "--x", x.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("row 2") && msg.contains("column 2"), "{msg}");
}

#[test]
fn table2_has_one_row_per_density_and_three_methods() {
    let dir = TempDir::new().unwrap();
    let out = lge(&["--out", dir.path().to_str().unwrap(), "sweep", "table2", "--runs", "1"]);
    assert!([0, 2].contains(&code(&out)));
    let text = fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "d,lge_phi0,lge_knn,rpca");
    assert_eq!(lines.len(), 11);
}

#[test]
fn one_seed_sweeps_repeat_exactly_and_replay() {
    let (a, b, c) = (TempDir::new().unwrap(), TempDir::new().unwrap(), TempDir::new().unwrap());
    let run = |dir: &Path| {
        let out = lge(&["--fixed-threads", "--out", dir.to_str().unwrap(), "sweep", "table2", "--runs", "1", "--grid", "0.1,0.3"]);
        assert!([0, 2].contains(&code(&out)));
    };
    run(a.path());
    run(b.path());
    assert_eq!(csv_files(a.path()), csv_files(b.path()));
    let manifest = path(a.path(), "manifest.txt");
    let replay = lge(&["replay", &manifest, "--out", c.path().to_str().unwrap()]);
    assert!([0, 2].contains(&code(&replay)));
    assert_eq!(csv_files(a.path()), csv_files(c.path()));
}

#[test]
fn amplitude_sweep_uses_ten_levels() {
    let dir = TempDir::new().unwrap();
    let out = lge(&["--out", dir.path().to_str().unwrap(), "sweep", "step2_distortion", "--runs", "1"]);
    assert!([0, 2].contains(&code(&out)));
    let text = fs::read_to_string(dir.path().join("step2_distortion_amplitude.csv")).unwrap();
    let c: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    let expected: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    assert_eq!(c.len(), 10);
    assert!(c.iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-12));
}
