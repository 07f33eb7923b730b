//! Seeded Monte-Carlo benchmarks on synthetic graph-smooth data.
//!
//! Every random draw comes from a stream keyed by the master seed and the
//! cell's own coordinates (run index, density, distortion level), so grids
//! can be extended without changing the numbers of existing cells. Cells are
//! evaluated on the ambient rayon pool and merged in grid order.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::graph::{
    distort_laplacian, knn_graph, laplacian_from_adjacency, DistortionMode, GraphLaplacian, LaplacianDistortion,
};
use crate::rng::{cell_id, cell_rng};
use crate::solver::{lge, rpca, step1_lowrank, step2_graph, SolverConfig};
use crate::synth::{
    distort_lowrank, generate_lowrank, rel_error, AmplitudeLaw, LowRankParams, PerturbationSpec, SyntheticDataset,
};

/// Shared settings of every benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub master_seed: u64,
    /// Independent runs averaged per grid point.
    pub runs: usize,
    pub params: LowRankParams,
    /// Amplitude law of the sparse corruption `M`.
    pub noise: AmplitudeLaw,
    pub cfg: SolverConfig,
    /// Neighbours per node of the data-driven initial graph.
    pub knn_k: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            master_seed: 0,
            runs: 5,
            params: LowRankParams::default(),
            noise: AmplitudeLaw::SignedUnit,
            cfg: SolverConfig::default(),
            knn_k: 5,
        }
    }
}

impl Protocol {
    fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(invalid("at least one run per grid point is required"));
        }
        self.cfg.validate()
    }

    fn params_key(&self) -> [u64; 5] {
        let LowRankParams { p, n, r, q, mu } = self.params;
        [p as u64, n as u64, r as u64, q.to_bits(), mu.to_bits()]
    }

    /// The clean dataset of run `run`. Shared by every grid point.
    pub fn clean_dataset(&self, run: usize) -> Result<SyntheticDataset> {
        let mut coords = self.params_key().to_vec();
        coords.push(run as u64);
        let id = cell_id("lowrank", &coords);
        generate_lowrank(self.params, id, &mut cell_rng(self.master_seed, id))
    }

    /// Run `run`'s dataset corrupted at density `d`.
    pub fn noisy_dataset(&self, run: usize, d: f64) -> Result<SyntheticDataset> {
        let spec = PerturbationSpec::new(d, self.noise)?;
        // Not keyed by `d`: the supports at different densities are nested.
        let mut coords = self.params_key().to_vec();
        coords.push(run as u64);
        let mut rng = cell_rng(self.master_seed, cell_id("noise", &coords));
        self.clean_dataset(run)?.perturb(spec, &mut rng)
    }

    /// Graph built from the rows of `x` by the k-nearest-neighbour rule.
    pub fn knn_laplacian(&self, x: &crate::kernels::Matrix) -> Result<GraphLaplacian> {
        Ok(laplacian_from_adjacency(&knn_graph(x, self.knn_k)?))
    }
}

/// Evaluates `f` over the cartesian grid `points × runs` and returns
/// `result[point][run]`.
fn grid<P, T, F>(points: &[P], runs: usize, f: F) -> Result<Vec<Vec<T>>>
where
    P: Sync,
    T: Send,
    F: Fn(&P, usize) -> Result<T> + Sync,
{
    let flat: Vec<T> = (0..points.len() * runs)
        .into_par_iter()
        .map(|i| f(&points[i / runs], i % runs))
        .collect::<Result<_>>()?;
    let mut it = flat.into_iter();
    Ok(points.iter().map(|_| it.by_ref().take(runs).collect()).collect())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Perturbation densities 0.1, 0.2, …, 1.0.
pub fn default_density_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Errors of the three estimators at one corruption density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodErrors {
    pub lge_phi0: f64,
    pub lge_knn: f64,
    pub rpca: f64,
    pub graph_phi0: f64,
    pub graph_knn: f64,
}

impl MethodErrors {
    pub fn mean_of(cells: &[MethodErrors]) -> Self {
        let col = |f: fn(&MethodErrors) -> f64| mean(&cells.iter().map(f).collect::<Vec<_>>());
        Self {
            lge_phi0: col(|c| c.lge_phi0),
            lge_knn: col(|c| c.lge_knn),
            rpca: col(|c| c.rpca),
            graph_phi0: col(|c| c.graph_phi0),
            graph_knn: col(|c| c.graph_knn),
        }
    }
}

/// Low-rank recovery error versus perturbation density.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRow {
    pub density: f64,
    /// Mean over runs.
    pub mean: MethodErrors,
    pub runs: Vec<MethodErrors>,
}

/// One run of the three estimators on a noisy dataset.
pub fn compare_methods(protocol: &Protocol, run: usize, d: f64) -> Result<MethodErrors> {
    let ds = protocol.noisy_dataset(run, d)?;
    let cfg = &protocol.cfg;
    let truth = ds.laplacian.matrix();
    let with_truth = lge(&ds.x, &ds.laplacian, cfg)?;
    let with_knn = lge(&ds.x, &protocol.knn_laplacian(&ds.x)?, cfg)?;
    let baseline = rpca(&ds.x, cfg.delta, cfg)?;
    Ok(MethodErrors {
        lge_phi0: rel_error(&with_truth.lowrank, &ds.lowrank)?,
        lge_knn: rel_error(&with_knn.lowrank, &ds.lowrank)?,
        rpca: rel_error(&baseline.lowrank, &ds.lowrank)?,
        graph_phi0: rel_error(with_truth.laplacian.matrix(), truth)?,
        graph_knn: rel_error(with_knn.laplacian.matrix(), truth)?,
    })
}

/// Recovery error of LGE (true and k-NN initial graph) and RPCA per density.
pub fn density_sweep(protocol: &Protocol, densities: &[f64]) -> Result<Vec<DensityRow>> {
    protocol.validate()?;
    let cells = grid(densities, protocol.runs, |&d, run| compare_methods(protocol, run, d))?;
    Ok(densities
        .iter()
        .zip(cells)
        .map(|(&density, runs)| DensityRow { density, mean: MethodErrors::mean_of(&runs), runs })
        .collect())
}

/// Step 1 fed a distorted graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphDistortionRow {
    pub mode: DistortionMode,
    pub probability: f64,
    /// Mean `‖Φ̃ − Φ0‖_F / ‖Φ0‖_F`.
    pub graph_distortion: f64,
    /// Mean `‖L̂ − L0‖_F / ‖L0‖_F`.
    pub lowrank_error: f64,
}

/// Distortion probabilities of the weights-only and topology sweeps.
pub fn default_step1_grid(mode: DistortionMode) -> Vec<f64> {
    match mode {
        DistortionMode::WeightsOnly => linspace(0.02, 0.65, 10),
        DistortionMode::Topology => linspace(0.05, 0.3, 11),
    }
}

/// Low-rank error of step 1 run on `Φ̃ = Π(Φ0 + ΔΦ)` at corruption density
/// `noise_density`.
pub fn step1_distortion(
    protocol: &Protocol,
    mode: DistortionMode,
    probabilities: &[f64],
    noise_density: f64,
) -> Result<Vec<GraphDistortionRow>> {
    protocol.validate()?;
    let tag = match mode {
        DistortionMode::WeightsOnly => 0,
        DistortionMode::Topology => 1,
    };
    let cells = grid(probabilities, protocol.runs, |&s, run| {
        let ds = protocol.noisy_dataset(run, noise_density)?;
        // Keyed without `s`: every probability reuses the run's stream.
        let mut rng = cell_rng(protocol.master_seed, cell_id("graph_distortion", &[tag, run as u64]));
        let distorted = distort_laplacian(&ds.laplacian, &LaplacianDistortion::new(s, mode)?, &mut rng);
        let out = step1_lowrank(&ds.x, &distorted, &protocol.cfg, None)?;
        Ok((rel_error(distorted.matrix(), ds.laplacian.matrix())?, rel_error(&out.lowrank, &ds.lowrank)?))
    })?;
    Ok(probabilities
        .iter()
        .zip(cells)
        .map(|(&probability, runs)| GraphDistortionRow {
            mode,
            probability,
            graph_distortion: mean(&runs.iter().map(|c| c.0).collect::<Vec<_>>()),
            lowrank_error: mean(&runs.iter().map(|c| c.1).collect::<Vec<_>>()),
        })
        .collect())
}

/// Step 2 fed a distorted low-rank matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowrankDistortionRow {
    pub density: f64,
    /// Amplitude bound `c`, or `None` for ±1 amplitudes.
    pub amplitude: Option<f64>,
    /// Mean `‖L̃ − L0‖_F / ‖L0‖_F`.
    pub lowrank_distortion: f64,
    /// Mean `‖Φ̂ − Φ0‖_F / ‖Φ0‖_F`.
    pub graph_error: f64,
}

/// Which parameter of the low-rank distortion is swept.
#[derive(Debug, Clone, PartialEq)]
pub enum LowrankSweep {
    /// ±1 amplitudes at each density.
    Density(Vec<f64>),
    /// `U(0, c)` amplitudes at a fixed density, for each `c`.
    Amplitude { density: f64, bounds: Vec<f64> },
}

impl LowrankSweep {
    pub fn default_density() -> Self {
        LowrankSweep::Density(linspace(0.05, 0.1, 6))
    }

    pub fn default_amplitude() -> Self {
        LowrankSweep::Amplitude { density: 0.2, bounds: default_density_grid() }
    }

    fn cells(&self) -> Vec<(f64, Option<f64>)> {
        match self {
            LowrankSweep::Density(ds) => ds.iter().map(|&d| (d, None)).collect(),
            LowrankSweep::Amplitude { density, bounds } => bounds.iter().map(|&c| (*density, Some(c))).collect(),
        }
    }
}

/// Graph error of step 2 run on `L̃ = L0 + ΔL` from a cold start.
pub fn step2_distortion(protocol: &Protocol, sweep: &LowrankSweep) -> Result<Vec<LowrankDistortionRow>> {
    protocol.validate()?;
    let points = sweep.cells();
    let cells = grid(&points, protocol.runs, |&(u, c), run| {
        let ds = protocol.clean_dataset(run)?;
        let law = match c {
            None => AmplitudeLaw::SignedUnit,
            Some(c) => AmplitudeLaw::Uniform { c, signed: true },
        };
        // Keyed by run only, so densities and bounds share one stream.
        let mut rng = cell_rng(protocol.master_seed, cell_id("lowrank_distortion", &[run as u64]));
        let distorted = distort_lowrank(&ds.lowrank, &PerturbationSpec::new(u, law)?, &mut rng)?;
        let out = step2_graph(&distorted, &protocol.cfg, None)?;
        Ok((rel_error(&distorted, &ds.lowrank)?, rel_error(out.phi.matrix(), ds.laplacian.matrix())?))
    })?;
    Ok(points
        .iter()
        .zip(cells)
        .map(|(&(density, amplitude), runs)| LowrankDistortionRow {
            density,
            amplitude,
            lowrank_distortion: mean(&runs.iter().map(|c| c.0).collect::<Vec<_>>()),
            graph_error: mean(&runs.iter().map(|c| c.1).collect::<Vec<_>>()),
        })
        .collect())
}

/// Fraction of adjacent pairs (ordered by `x`) where `y` decreases.
pub fn monotone_violations(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let bad = sorted.windows(2).filter(|w| w[1].1 < w[0].1).count();
    bad as f64 / (sorted.len() - 1) as f64
}
