//! `lge`: dataset generation, solver runs and benchmark sweeps over CSV files.
//!
//! Every command writes its outputs plus a `manifest.txt` into `--out`. The
//! manifest holds the full solver configuration, the seed and the argument
//! list, so `lge replay <manifest>` regenerates the same numbers.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lge_core::graph::{knn_graph, laplacian_from_adjacency, GraphLaplacian, LAPLACIAN_TOL};
use lge_core::io;
use lge_core::kernels::{rank_by_tolerance, Matrix, DEFAULT_RANK_TOL};
use lge_core::rng::{cell_id, cell_rng, seeded};
use lge_core::solver::{lge, objective, rpca, SolverConfig};
use lge_core::synth::{generate_lowrank, AmplitudeLaw, LowRankParams, PerturbationSpec};

pub mod sweep;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const MAX_ITER: i32 = 2;
}

pub const TRACE_HEADER: [&str; 5] = ["outer_iter", "objective", "step1_residual", "step2_residual", "rank_L"];

#[derive(Debug, Parser)]
#[command(name = "lge", version, about = "Joint low-rank and graph Laplacian estimation from corrupted data")]
pub struct Cli {
    /// Master seed; every random draw is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for independent sweep cells [default: all cores].
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Pin the worker pool to `--jobs` threads (1 when `--jobs` is absent).
    /// Results never depend on the thread count; the flag is recorded.
    #[arg(long, global = true)]
    pub fixed_threads: bool,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// key=value solver configuration (a manifest also works).
    #[arg(long, global = true, env = "LGE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Override one solver setting, e.g. `--set beta=0.4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (X, L0, M, Phi0, W, P, Y).
    Gen(GenArgs),
    /// Run LGE on a data matrix.
    Solve(SolveArgs),
    /// Run robust PCA on a data matrix.
    Rpca(RpcaArgs),
    /// Run a benchmark sweep.
    Sweep(SweepArgs),
    /// Re-run the command recorded in a manifest into `--out`.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 30)]
    pub p: usize,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub r: usize,
    /// Edge probability of the random graph.
    #[arg(long, default_value_t = 0.3)]
    pub q: f64,
    /// Mean of the coefficients.
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    /// Density of the sparse corruption.
    #[arg(long, short = 'd', default_value_t = 0.0)]
    pub density: f64,
    /// signed_unit | uniform:<c> | uniform_positive:<c>
    #[arg(long, default_value = "signed_unit")]
    pub amplitude: String,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Data matrix CSV.
    #[arg(long)]
    pub x: PathBuf,
    /// Initial Laplacian CSV.
    #[arg(long, conflicts_with = "knn", required_unless_present = "knn")]
    pub graph: Option<PathBuf>,
    /// Build the initial graph from the rows of X with k nearest neighbours.
    #[arg(long)]
    pub knn: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Maximum outer iterations.
    #[arg(long)]
    pub outer: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RpcaArgs {
    #[arg(long)]
    pub x: PathBuf,
    /// Weight of the sparse term [default: the configured delta, 0.5].
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// table2 | table3 | step1_distortion | step2_distortion | sensitivity
    pub kind: String,
    /// Independent runs averaged per grid point.
    #[arg(long, alias = "seeds", default_value_t = 5)]
    pub runs: usize,
    /// Replace the primary grid (densities, probabilities or s values).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Corruption density of X where the sweep holds it fixed.
    #[arg(long)]
    pub noise_density: Option<f64>,
}

/// What a finished command reports back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    MaxIterReached,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Converged => exit::OK,
            Outcome::MaxIterReached => exit::MAX_ITER,
        }
    }
}

/// Parses `args` (including the program name), runs, and maps the result to
/// an exit code. Errors are printed to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let recorded: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, &recorded) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            exit::USAGE
        }
    }
}

/// Runs a parsed command. `recorded_args` is what the manifest stores for replay.
pub fn run(cli: Cli, recorded_args: &[String]) -> Result<Outcome> {
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest, &cli.out);
    }
    let threads = match (cli.jobs, cli.fixed_threads) {
        (Some(0), _) => bail!("--jobs must be at least 1"),
        (Some(j), _) => j,
        (None, true) => 1,
        (None, false) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().context("building the worker pool")?;
    pool.install(|| dispatch(&cli, recorded_args))
}

fn dispatch(cli: &Cli, recorded_args: &[String]) -> Result<Outcome> {
    let started = Instant::now();
    let mut cfg = base_config(cli)?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let (name, outcome, extra) = match &cli.command {
        Command::Gen(a) => ("gen", cmd_gen(cli, a)?, Vec::new()),
        Command::Solve(a) => {
            apply_flag(&mut cfg, "gamma", a.gamma)?;
            apply_flag(&mut cfg, "delta", a.delta)?;
            apply_flag(&mut cfg, "beta", a.beta)?;
            apply_flag(&mut cfg, "outer_max_iter", a.outer)?;
            ("solve", cmd_solve(&cli.out, a, &cfg)?, Vec::new())
        }
        Command::Rpca(a) => {
            apply_flag(&mut cfg, "delta", a.delta)?;
            ("rpca", cmd_rpca(&cli.out, a, &cfg)?, Vec::new())
        }
        Command::Sweep(a) => {
            let extra = sweep::run_sweep(a, cli.seed, &cfg, &cli.out)?;
            ("sweep", Outcome::Converged, extra)
        }
        Command::Replay { .. } => unreachable!("handled before the pool is built"),
    };
    let mut manifest = run_manifest(cli, name, &cfg, recorded_args);
    manifest.extend(extra);
    manifest.push(("wall_time_seconds".into(), format!("{:.3}", started.elapsed().as_secs_f64())));
    if name == "gen" {
        // the dataset manifest is already in place; append the run record
        let path = cli.out.join("manifest.txt");
        let mut pairs = io::read_key_values(&path)?;
        pairs.extend(manifest);
        io::write_key_values(&path, &pairs)?;
    } else {
        io::write_key_values(&cli.out.join("manifest.txt"), &manifest)?;
    }
    Ok(outcome)
}

/// Defaults, then the config file, then `--set` overrides.
fn base_config(cli: &Cli) -> Result<SolverConfig> {
    let mut cfg = SolverConfig::default();
    if let Some(path) = &cli.config {
        let pairs = io::read_key_values(path)?;
        let is_manifest = pairs.iter().any(|(k, _)| k == "command");
        for (k, v) in &pairs {
            if is_manifest && !SolverConfig::KEYS.contains(&k.as_str()) {
                continue;
            }
            cfg.set(k, v).with_context(|| format!("in {}", path.display()))?;
        }
    }
    for o in &cli.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {o:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_flag<T: ToString>(cfg: &mut SolverConfig, key: &str, v: Option<T>) -> Result<()> {
    if let Some(v) = v {
        cfg.set(key, &v.to_string())?;
        cfg.validate()?;
    }
    Ok(())
}

fn run_manifest(cli: &Cli, command: &str, cfg: &SolverConfig, args: &[String]) -> Vec<(String, String)> {
    let mut pairs = vec![
        ("command".to_string(), command.to_string()),
        ("seed".into(), cli.seed.to_string()),
        ("jobs".into(), cli.jobs.map_or("auto".into(), |j| j.to_string())),
        ("fixed_threads".into(), cli.fixed_threads.to_string()),
        ("software_version".into(), env!("CARGO_PKG_VERSION").to_string()),
    ];
    pairs.extend(cfg.to_pairs());
    pairs.extend(args.iter().enumerate().map(|(i, a)| (format!("arg.{i}"), a.clone())));
    pairs
}

/// Rebuilds the argument list from `arg.N` keys, drops `--out`/`--config`,
/// and runs again with the manifest itself as the configuration.
fn replay(manifest: &Path, out: &Path) -> Result<Outcome> {
    let pairs = io::read_key_values(manifest)?;
    let mut recorded: Vec<(usize, String)> = pairs
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("arg.").and_then(|i| i.parse().ok()).map(|i| (i, v.clone())))
        .collect();
    if recorded.is_empty() {
        bail!("{} records no arguments", manifest.display());
    }
    recorded.sort_by_key(|(i, _)| *i);
    let mut args = vec!["lge".to_string()];
    let mut it = recorded.into_iter().map(|(_, a)| a);
    while let Some(a) = it.next() {
        if a == "--out" || a == "--config" {
            it.next();
        } else if !(a.starts_with("--out=") || a.starts_with("--config=")) {
            args.push(a);
        }
    }
    args.extend(["--config".into(), manifest.display().to_string(), "--out".into(), out.display().to_string()]);
    let cli = Cli::try_parse_from(&args).map_err(|e| anyhow::anyhow!("recorded arguments no longer parse: {e}"))?;
    run(cli, &args[1..])
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<Outcome> {
    let params = LowRankParams { p: a.p, n: a.n, r: a.r, q: a.q, mu: a.mu };
    let law: AmplitudeLaw = a.amplitude.parse()?;
    let spec = PerturbationSpec::new(a.density, law)?;
    let ds = generate_lowrank(params, cli.seed, &mut seeded(cli.seed))?;
    let ds = ds.perturb(spec, &mut cell_rng(cli.seed, cell_id("gen_noise", &[])))?;
    io::save_dataset(&cli.out, &ds, &[])?;
    Ok(Outcome::Converged)
}

fn initial_graph(a: &SolveArgs, x: &Matrix) -> Result<GraphLaplacian> {
    match (&a.graph, a.knn) {
        (Some(path), _) => {
            let m = io::read_matrix(path)?;
            Ok(GraphLaplacian::new(m, LAPLACIAN_TOL).with_context(|| format!("{} is not a valid Laplacian", path.display()))?)
        }
        (None, Some(k)) => Ok(laplacian_from_adjacency(&knn_graph(x, k)?)),
        (None, None) => bail!("either --graph or --knn is required"),
    }
}

fn cmd_solve(out: &Path, a: &SolveArgs, cfg: &SolverConfig) -> Result<Outcome> {
    let x = io::read_matrix(&a.x)?;
    let phi = initial_graph(a, &x)?;
    if phi.nodes() != x.nrows() {
        bail!("graph has {} nodes but X has {} rows", phi.nodes(), x.nrows());
    }
    let sol = lge(&x, &phi, cfg)?;
    io::write_matrix(&out.join("L.csv"), &sol.lowrank)?;
    io::write_matrix(&out.join("M.csv"), &sol.sparse)?;
    io::write_matrix(&out.join("Phi.csv"), sol.laplacian.matrix())?;
    let rows: Vec<Vec<String>> = sol
        .trace
        .iter()
        .map(|r| {
            vec![
                r.outer_iter.to_string(),
                io::format_value(r.objective),
                io::format_value(r.step1_residual),
                io::format_value(r.step2_residual),
                r.rank_l.to_string(),
            ]
        })
        .collect();
    io::write_table(&out.join("trace.csv"), &TRACE_HEADER, &rows)?;
    Ok(if sol.converged { Outcome::Converged } else { Outcome::MaxIterReached })
}

fn cmd_rpca(out: &Path, a: &RpcaArgs, cfg: &SolverConfig) -> Result<Outcome> {
    let x = io::read_matrix(&a.x)?;
    let res = rpca(&x, cfg.delta, cfg)?;
    io::write_matrix(&out.join("L.csv"), &res.lowrank)?;
    io::write_matrix(&out.join("M.csv"), &res.sparse)?;
    let p = x.nrows();
    let value = objective(&res.lowrank, &res.sparse, &Matrix::zeros(p, p), &cfg.without_graph());
    let last = res.trace.last().map_or(0.0, |r| r.primal_residual);
    let row = vec![
        "1".to_string(),
        io::format_value(value),
        io::format_value(last),
        io::format_value(0.0),
        rank_by_tolerance(&res.lowrank, DEFAULT_RANK_TOL).to_string(),
    ];
    io::write_table(&out.join("trace.csv"), &TRACE_HEADER, &[row])?;
    Ok(if res.converged { Outcome::Converged } else { Outcome::MaxIterReached })
}
