use log::{debug, warn};

use crate::error::{invalid, Result};
use crate::graph::GraphLaplacian;
use crate::kernels::{norms, rank_by_tolerance, Matrix, DEFAULT_RANK_TOL};

use super::step1::{run_step1, Step1Record, Step1Solver, Step1State};
use super::step2::{step2_graph, Step2Warm};
use super::SolverConfig;

/// Slack allowed before an objective increase is reported.
const MONOTONE_SLACK: f64 = 1e-8;

/// `‖L‖_* + δ‖M‖_1 + γ tr(Lᵀ Φ L) + β‖Φ‖_F²`.
pub fn objective(l: &Matrix, m: &Matrix, phi: &Matrix, cfg: &SolverConfig) -> f64 {
    let n = norms(l);
    n.nuclear + cfg.delta * m.abs().sum() + cfg.gamma * (l.transpose() * phi * l).trace() + cfg.beta * phi.norm_squared()
}

/// One outer iteration of the alternation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterRecord {
    pub outer_iter: usize,
    pub objective: f64,
    /// `‖X − L − M‖_F / ‖X‖_F` after step 1.
    pub step1_residual: f64,
    /// `‖z − Φ‖_F` after step 2.
    pub step2_residual: f64,
    pub rank_l: usize,
    pub step1_iterations: usize,
    pub step2_iterations: usize,
    pub step1_converged: bool,
    pub step2_converged: bool,
}

#[derive(Debug, Clone)]
pub struct LgeSolution {
    pub lowrank: Matrix,
    pub sparse: Matrix,
    pub laplacian: GraphLaplacian,
    pub trace: Vec<OuterRecord>,
    /// The objective settled and the last step-1 run met its tolerance.
    pub converged: bool,
}

impl LgeSolution {
    pub fn outer_iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.objective)
    }
}

/// Alternates step 1 (warm-started) and step 2 (warm-started) until the
/// objective changes by at most `outer_tol` relative, or `outer_max_iter`.
pub fn lge(x: &Matrix, phi_init: &GraphLaplacian, cfg: &SolverConfig) -> Result<LgeSolution> {
    cfg.validate()?;
    let p = x.nrows();
    if phi_init.nodes() != p {
        return Err(invalid(format!("initial graph has {} nodes, data has {p} rows", phi_init.nodes())));
    }
    let mut graph = phi_init.clone();
    let mut state: Option<Step1State> = None;
    let mut warm2 = Step2Warm::from_graph(phi_init);
    let mut trace: Vec<OuterRecord> = Vec::new();
    let mut lowrank = Matrix::zeros(p, x.ncols());
    let mut sparse = lowrank.clone();
    let mut settled = false;
    let mut last_step1_converged = false;

    for outer in 1..=cfg.outer_max_iter {
        let solver = Step1Solver::new(x, graph.matrix(), cfg)?;
        let s1 = run_step1(&solver, cfg.step1_tol, cfg.step1_max_iter, state.take())?;
        last_step1_converged = s1.converged;
        let s2 = step2_graph(&s1.lowrank, cfg, Some(&warm2))?;
        warm2 = s2.warm();

        let value = objective(&s1.lowrank, &s1.sparse, s2.phi.matrix(), cfg);
        let record = OuterRecord {
            outer_iter: outer,
            objective: value,
            step1_residual: s1.final_primal_residual(),
            step2_residual: s2.residual,
            rank_l: rank_by_tolerance(&s1.lowrank, DEFAULT_RANK_TOL),
            step1_iterations: s1.iterations(),
            step2_iterations: s2.iterations,
            step1_converged: s1.converged,
            step2_converged: s2.converged,
        };
        debug!("outer {outer}: objective {value:.6e}, step1 {} its, step2 {} its", record.step1_iterations, record.step2_iterations);
        let previous = trace.last().map(|r| r.objective);
        trace.push(record);
        lowrank = s1.lowrank;
        sparse = s1.sparse;
        state = Some(s1.state);
        graph = s2.phi;

        if let Some(prev) = previous {
            if value > prev + MONOTONE_SLACK * prev.abs().max(1.0) {
                warn!("objective increased at outer iteration {outer}: {prev:.9e} -> {value:.9e}");
            }
            if (prev - value).abs() <= cfg.outer_tol * prev.abs().max(f64::MIN_POSITIVE) {
                settled = true;
                break;
            }
        }
    }
    Ok(LgeSolution { lowrank, sparse, laplacian: graph, trace, converged: settled && last_step1_converged })
}

#[derive(Debug, Clone)]
pub struct RpcaOutput {
    pub lowrank: Matrix,
    pub sparse: Matrix,
    pub trace: Vec<Step1Record>,
    pub converged: bool,
}

/// Robust PCA `min ‖L‖_* + δ‖M‖_1` s.t. `X = L + M`: step 1 with `γ = 0`.
pub fn rpca(x: &Matrix, delta: f64, cfg: &SolverConfig) -> Result<RpcaOutput> {
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be > 0, got {delta}")));
    }
    let cfg = SolverConfig { delta, ..cfg.without_graph() };
    let p = x.nrows();
    let zero = Matrix::zeros(p, p);
    let solver = Step1Solver::new(x, &zero, &cfg)?;
    let out = run_step1(&solver, cfg.step1_tol, cfg.step1_max_iter, None)?;
    Ok(RpcaOutput { lowrank: out.lowrank, sparse: out.sparse, trace: out.trace, converged: out.converged })
}
