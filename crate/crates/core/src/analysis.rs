//! Sensitivity of step 1 to an inexact graph.
//!
//! Starting from an iterate `k` of an undistorted run, the next two updates
//! are replayed with a distorted graph `Φ̃ = Φ0 + ΔΦ`. The first update's
//! `L`, `M` do not see the graph, so `J^{(k+2)} = A + (γΦ̃ + r2 I)⁻¹ B` with
//! `A`, `B` fixed by the snapshot. Truncating the inverse to second order
//! gives `J^{(k+2)} ≈ A + CB − γ C ΔΦ C B`, and the SVT is replaced by a
//! closed form in `‖J‖_F` with two empirical constants `g` and `h`.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::experiments::{mean, Protocol};
use crate::graph::{laplacian_distortion_matrix, project_to_laplacian_set, DistortionMode, GraphLaplacian, LaplacianDistortion};
use crate::kernels::{rank_by_tolerance, rank_of_spectrum, Matrix, DEFAULT_RANK_TOL};
use crate::rng::{cell_id, cell_rng};
use crate::solver::{SolverConfig, Step1Solver, Step1State};
use crate::synth::SyntheticDataset;

/// Fallback for `h` when no singular value is at or below `τ1`: the mean of
/// `U(0, τ1)` is `τ1/2`.
pub const H_FALLBACK: f64 = 2.0;

/// An undistorted step-1 iterate together with what produced it.
#[derive(Debug, Clone)]
pub struct IterateSnapshot {
    pub state: Step1State,
    pub x: Matrix,
    pub lowrank_truth: Matrix,
    pub phi0: GraphLaplacian,
    pub cfg: SolverConfig,
    /// Seed of the dataset the run was made on.
    pub seed: u64,
}

impl IterateSnapshot {
    pub fn k(&self) -> usize {
        self.state.iteration
    }
}

/// Every iterate of an undistorted step-1 run plus the spectra of the
/// averaged matrices `J` it thresholded.
#[derive(Debug, Clone)]
pub struct RecordedRun {
    /// `states[i]` is the iterate after `i` updates.
    pub states: Vec<Step1State>,
    /// `spectra[i]` holds the singular values of `J^{(i)}`; `spectra[0]` is empty.
    pub spectra: Vec<Vec<f64>>,
    base: IterateSnapshot,
}

impl RecordedRun {
    /// Runs `iterations` updates from the all-zero state on the true graph.
    pub fn record(ds: &SyntheticDataset, cfg: &SolverConfig, iterations: usize) -> Result<Self> {
        let solver = Step1Solver::new(&ds.x, ds.laplacian.matrix(), cfg)?;
        let (p, n) = ds.x.shape();
        let mut state = Step1State::zeros(p, n);
        let mut states = vec![state.clone()];
        let mut spectra = vec![Vec::new()];
        for _ in 0..iterations {
            let it = solver.step(&mut state)?;
            states.push(state.clone());
            spectra.push(it.j_singular_values);
        }
        let base = IterateSnapshot {
            state: Step1State::zeros(p, n),
            x: ds.x.clone(),
            lowrank_truth: ds.lowrank.clone(),
            phi0: ds.laplacian.clone(),
            cfg: cfg.clone(),
            seed: ds.seed,
        };
        Ok(Self { states, spectra, base })
    }

    pub fn len(&self) -> usize {
        self.states.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self, k: usize) -> Result<IterateSnapshot> {
        let state = self.states.get(k).ok_or_else(|| invalid(format!("run has no iterate {k}")))?;
        Ok(IterateSnapshot { state: state.clone(), ..self.base.clone() })
    }

    /// `g`, `h`, `m` for snapshot `k`, from the spectra of `J^{(k+1)}` and
    /// `J^{(k+2)}` of this run.
    pub fn params_at(&self, k: usize) -> Result<ApproxParams> {
        if k + 2 > self.len() {
            return Err(invalid(format!("run of {} iterations cannot supply J^({})", self.len(), k + 2)));
        }
        let rank_k = rank_by_tolerance(&self.states[k].lowrank, DEFAULT_RANK_TOL);
        estimate_gh(&self.spectra[k + 1..=k + 2], rank_k, self.base.cfg.tau1())
    }
}

/// Empirical constants of the closed-form SVT surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxParams {
    /// Mean of `‖J‖_* / (√rank(J) ‖J‖_F)`, in `(0, 1]`.
    pub g: f64,
    /// `τ1 / mean(σ_i : σ_i ≤ τ1)`.
    pub h: f64,
    /// `τ1² rank(L^{(k)}) + (τ1²/h)(dim − rank(L^{(k)}))`.
    pub m: f64,
    pub tau1: f64,
    pub rank_k: usize,
    /// Number of singular values per `J`, `min(p, n)`.
    pub dim: usize,
}

/// Estimates `g`, `h` and `m` from sampled `J` spectra (non-increasing).
pub fn estimate_gh(spectra: &[Vec<f64>], rank_k: usize, tau1: f64) -> Result<ApproxParams> {
    if spectra.is_empty() || spectra.iter().any(|s| s.is_empty()) {
        return Err(invalid("need at least one non-empty J spectrum"));
    }
    if !(tau1 > 0.0) {
        return Err(invalid(format!("tau1 must be > 0, got {tau1}")));
    }
    let dim = spectra[0].len();
    if spectra.iter().any(|s| s.len() != dim) || rank_k > dim {
        return Err(invalid("spectra must share one length, at least rank(L^(k))"));
    }
    let ratios: Vec<f64> = spectra
        .iter()
        .filter_map(|s| {
            let rank = rank_of_spectrum(s, DEFAULT_RANK_TOL);
            let fro = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            (rank > 0).then(|| s.iter().sum::<f64>() / ((rank as f64).sqrt() * fro))
        })
        .collect();
    let g = if ratios.is_empty() { 1.0 } else { mean(&ratios) };
    let small: Vec<f64> = spectra.iter().flatten().copied().filter(|&v| v <= tau1).collect();
    let small_mean = if small.is_empty() { 0.0 } else { mean(&small) };
    let h = if small_mean > 0.0 { tau1 / small_mean } else { H_FALLBACK };
    let m = tau1 * tau1 * rank_k as f64 + tau1 * tau1 / h * (dim - rank_k) as f64;
    Ok(ApproxParams { g: g.min(1.0), h, m, tau1, rank_k, dim })
}

/// A square-root surrogate, with a flag set when its radicand was negative
/// and clamped to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surrogate {
    pub value: f64,
    pub clamped: bool,
}

impl Surrogate {
    fn sqrt_of(radicand: f64) -> Self {
        if radicand < 0.0 {
            Self { value: 0.0, clamped: true }
        } else {
            Self { value: radicand.sqrt(), clamped: false }
        }
    }
}

/// `‖D_τ1(J)‖_F² ≈ ‖J‖_F² − 2τ1‖J‖_* + m` with the exact nuclear norm.
pub fn lowrank_frobenius_sq_exact_nuclear(j_frobenius: f64, j_nuclear: f64, params: &ApproxParams) -> f64 {
    j_frobenius * j_frobenius - 2.0 * params.tau1 * j_nuclear + params.m
}

/// `‖L^{(k+2)}‖_F ≈ (F² − 2τ1 g √dim F + m)^{1/2}` where `F = ‖J^{(k+2)}‖_F`.
pub fn approx_lowrank_frobenius(j_frobenius: f64, params: &ApproxParams) -> Surrogate {
    let f = j_frobenius;
    let bound = params.g * (params.dim as f64).sqrt() * f;
    Surrogate::sqrt_of(f * f - 2.0 * params.tau1 * bound + params.m)
}

/// The fixed pieces of `J^{(k+2)}` at a snapshot.
#[derive(Debug, Clone)]
pub struct Abc {
    pub a: Matrix,
    pub b: Matrix,
    /// Second-order Neumann approximation of `(γΦ0 + r2 I)⁻¹`.
    pub c: Matrix,
    /// The undistorted iterate `k + 1`.
    pub next: Step1State,
}

impl Abc {
    /// `A + CB − γ C ΔΦ C B`.
    pub fn approx_j(&self, delta_phi: &Matrix, gamma: f64) -> Matrix {
        let cb = &self.c * &self.b;
        &self.a + &cb - &self.c * delta_phi * &cb * gamma
    }

    /// `A + (γΦ + r2 I)⁻¹ B` with the exact inverse.
    pub fn exact_j(&self, phi: &Matrix, cfg: &SolverConfig) -> Result<Matrix> {
        let p = phi.nrows();
        let inv = (phi * cfg.gamma + Matrix::identity(p, p) * cfg.r2)
            .try_inverse()
            .ok_or_else(|| invalid("γΦ + r2·I is singular"))?;
        Ok(&self.a + inv * &self.b)
    }
}

pub fn abc_matrices(snap: &IterateSnapshot) -> Result<Abc> {
    let cfg = &snap.cfg;
    let (r1, r2, gamma) = (cfg.r1, cfg.r2, cfg.gamma);
    let solver = Step1Solver::new(&snap.x, snap.phi0.matrix(), cfg)?;
    let mut next = snap.state.clone();
    solver.step(&mut next)?;
    let s = &snap.state;
    // Expanding the k+1 dual updates gives +(z1 + z2)/(r1 + r2).
    let a = (&snap.x - &next.sparse) * (2.0 * r1 / (r1 + r2)) - &next.lowrank + (&s.dual_data + &s.dual_split) / (r1 + r2);
    let b = (&next.lowrank - &s.dual_split / r2) * (2.0 * r2 * r2 / (r1 + r2));
    let p = snap.phi0.nodes();
    let t = snap.phi0.matrix() * (gamma / r2);
    let c = (Matrix::identity(p, p) - &t + &t * &t) / r2;
    Ok(Abc { a, b, c, next })
}

/// Result of replaying two updates on a distorted graph.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub lowrank: Matrix,
    /// `‖L^{(k+2)} − L0‖_F`.
    pub lerr: f64,
    pub state: Step1State,
}

/// Two step-1 updates from the snapshot with `phi_tilde` in the `K` update.
/// `phi_tilde` may be any symmetric matrix for which `γΦ̃ + r2 I` is invertible.
pub fn two_step_rollout(snap: &IterateSnapshot, phi_tilde: &Matrix) -> Result<Rollout> {
    let solver = Step1Solver::new(&snap.x, phi_tilde, &snap.cfg)?;
    let mut state = snap.state.clone();
    solver.step(&mut state)?;
    solver.step(&mut state)?;
    Ok(Rollout { lerr: (&state.lowrank - &snap.lowrank_truth).norm(), lowrank: state.lowrank.clone(), state })
}

/// `|‖L^{(k+2)}‖_F surrogate − ‖L0‖_F|` for distortion `delta_phi`.
pub fn lerr_analytic(abc: &Abc, delta_phi: &Matrix, gamma: f64, params: &ApproxParams, norm_l0: f64) -> Surrogate {
    lerr_from_frobenius(abc.approx_j(delta_phi, gamma).norm(), params, norm_l0)
}

/// [`lerr_analytic`] given `F = ‖A + CB − γCΔΦCB‖_F` directly.
pub fn lerr_from_frobenius(f: f64, params: &ApproxParams, norm_l0: f64) -> Surrogate {
    let s = approx_lowrank_frobenius(f, params);
    Surrogate { value: (s.value - norm_l0).abs(), clamped: s.clamped }
}

/// Settings of the inexact-graph study.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySpec {
    /// Data, runs, seed and base solver settings; `cfg.gamma` is overridden
    /// by each entry of `gammas`.
    pub protocol: Protocol,
    pub gammas: Vec<f64>,
    /// Distortion probabilities `s`.
    pub s_grid: Vec<f64>,
    /// Snapshot iterations.
    pub ks: Vec<usize>,
    /// Density of the signed-unit corruption in `X`.
    pub noise_density: f64,
    /// Feed `Π(Φ0 + ΔΦ)` instead of the raw `Φ0 + ΔΦ`.
    pub reproject: bool,
}

impl Default for SensitivitySpec {
    fn default() -> Self {
        let mut protocol = Protocol::default();
        protocol.params.r = 6;
        Self {
            protocol,
            gammas: vec![0.0, 0.5, 1.0, 2.0],
            s_grid: (1..=100).map(|i| i as f64 / 100.0).collect(),
            ks: vec![5, 11, 18],
            noise_density: 0.1,
            reproject: true,
        }
    }
}

/// Mean over runs at one `(γ, s, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityRow {
    pub gamma: f64,
    pub s: f64,
    pub k: usize,
    /// `‖ΔΦ‖_F / ‖Φ0‖_F` of the graph actually fed to the solver.
    pub rel_graph_distortion: f64,
    pub lerr_empirical_rel: f64,
    pub lerr_analytic_rel: f64,
    pub seeds: usize,
    /// Runs whose surrogate radicand was clamped.
    pub clamped: usize,
}

/// Undistorted `‖L^{(k+2)}‖_F²` against its closed-form surrogates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateCheck {
    pub run: usize,
    pub k: usize,
    pub empirical_sq: f64,
    /// Exact `‖J‖_F`, `‖J‖_*`; estimated `h`.
    pub exact_nuclear_sq: f64,
    /// Exact `‖J‖_F`; estimated `g`, `h`.
    pub estimated_sq: f64,
}

impl SurrogateCheck {
    pub fn rel_gap(&self) -> f64 {
        (self.estimated_sq - self.empirical_sq).abs() / self.empirical_sq
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    distortion: f64,
    empirical: f64,
    analytic: f64,
    clamped: bool,
}

fn distortion_for(spec: &SensitivitySpec, ds: &SyntheticDataset, run: usize, s: f64) -> Result<Matrix> {
    let d = LaplacianDistortion::new(s, DistortionMode::Topology)?;
    let mut rng = cell_rng(spec.protocol.master_seed, cell_id("sensitivity", &[run as u64]));
    let raw = laplacian_distortion_matrix(&ds.laplacian, &d, &mut rng);
    if spec.reproject {
        Ok(project_to_laplacian_set(&(ds.laplacian.matrix() + &raw))?.into_inner() - ds.laplacian.matrix())
    } else {
        Ok(raw)
    }
}

fn horizon(spec: &SensitivitySpec) -> Result<usize> {
    spec.ks.iter().max().map(|k| k + 2).ok_or_else(|| invalid("no snapshot iterations"))
}

/// Empirical and analytic `L_err / ‖L0‖_F` over `γ × s × k`, averaged over
/// runs. Within a run every `γ` and `k` sees the same `ΔΦ` at a given `s`,
/// and the supports are nested in `s`.
pub fn sensitivity_sweep(spec: &SensitivitySpec) -> Result<Vec<SensitivityRow>> {
    let horizon = horizon(spec)?;
    if spec.protocol.runs == 0 || spec.gammas.is_empty() || spec.s_grid.is_empty() {
        return Err(invalid("sensitivity sweep needs runs, gammas and an s grid"));
    }
    let runs = spec.protocol.runs;
    let cells: Vec<Vec<Cell>> = (0..spec.gammas.len() * runs)
        .into_par_iter()
        .map(|i| -> Result<Vec<Cell>> {
            let (gamma, run) = (spec.gammas[i / runs], i % runs);
            let ds = spec.protocol.noisy_dataset(run, spec.noise_density)?;
            let cfg = SolverConfig { gamma, ..spec.protocol.cfg.clone() };
            let record = RecordedRun::record(&ds, &cfg, horizon)?;
            let norm_l0 = ds.lowrank.norm();
            let norm_phi0 = ds.laplacian.matrix().norm();
            let deltas = spec.s_grid.iter().map(|&s| distortion_for(spec, &ds, run, s)).collect::<Result<Vec<_>>>()?;
            let mut out = Vec::with_capacity(spec.s_grid.len() * spec.ks.len());
            for &k in &spec.ks {
                let snap = record.snapshot(k)?;
                let abc = abc_matrices(&snap)?;
                let params = record.params_at(k)?;
                for delta in &deltas {
                    let rollout = two_step_rollout(&snap, &(ds.laplacian.matrix() + delta))?;
                    let analytic = lerr_analytic(&abc, delta, gamma, &params, norm_l0);
                    out.push(Cell {
                        distortion: delta.norm() / norm_phi0,
                        empirical: rollout.lerr / norm_l0,
                        analytic: analytic.value / norm_l0,
                        clamped: analytic.clamped,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (gi, &gamma) in spec.gammas.iter().enumerate() {
        let per_run = &cells[gi * runs..(gi + 1) * runs];
        for (ki, &k) in spec.ks.iter().enumerate() {
            for (si, &s) in spec.s_grid.iter().enumerate() {
                let idx = ki * spec.s_grid.len() + si;
                let pick = |f: fn(&Cell) -> f64| mean(&per_run.iter().map(|c| f(&c[idx])).collect::<Vec<_>>());
                rows.push(SensitivityRow {
                    gamma,
                    s,
                    k,
                    rel_graph_distortion: pick(|c| c.distortion),
                    lerr_empirical_rel: pick(|c| c.empirical),
                    lerr_analytic_rel: pick(|c| c.analytic),
                    seeds: runs,
                    clamped: per_run.iter().filter(|c| c[idx].clamped).count(),
                });
            }
        }
    }
    Ok(rows)
}

/// Compares the surrogate for `‖L^{(k+2)}‖_F²` with the SVT value on the
/// undistorted runs at `spec.protocol.cfg.gamma`.
pub fn surrogate_checks(spec: &SensitivitySpec) -> Result<Vec<SurrogateCheck>> {
    let horizon = horizon(spec)?;
    let per_run: Vec<Vec<SurrogateCheck>> = (0..spec.protocol.runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<SurrogateCheck>> {
            let ds = spec.protocol.noisy_dataset(run, spec.noise_density)?;
            let record = RecordedRun::record(&ds, &spec.protocol.cfg, horizon)?;
            spec.ks
                .iter()
                .map(|&k| {
                    let params = record.params_at(k)?;
                    let sigma = &record.spectra[k + 2];
                    let fro = sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let nuclear: f64 = sigma.iter().sum();
                    Ok(SurrogateCheck {
                        run,
                        k,
                        empirical_sq: record.states[k + 2].lowrank.norm_squared(),
                        exact_nuclear_sq: lowrank_frobenius_sq_exact_nuclear(fro, nuclear, &params),
                        estimated_sq: approx_lowrank_frobenius(fro, &params).value.powi(2),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_run.into_iter().flatten().collect())
}
