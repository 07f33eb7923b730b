//! Laplacian refinement for a fixed low-rank matrix:
//! `min γ tr(Lᵀ Φ L) + β‖Φ‖_F²` over valid Laplacians, split as `Φ = z`,
//! `z ∈ 𝓛`. Each iteration takes the unconstrained minimizer in `Φ`,
//! projects onto the Laplacian set for `z`, then moves the multiplier.

use crate::error::{invalid, Error, Result};
use crate::graph::{project_to_laplacian_set, GraphLaplacian};
use crate::kernels::Matrix;

use super::{DualStep, PhiDenominator, SolverConfig};

/// Feasible iterate and multiplier carried between calls.
#[derive(Debug, Clone, PartialEq)]
pub struct Step2Warm {
    pub z: Matrix,
    pub dual: Matrix,
}

impl Step2Warm {
    pub fn zeros(p: usize) -> Self {
        Self { z: Matrix::zeros(p, p), dual: Matrix::zeros(p, p) }
    }

    /// Starts from a known graph with a zero multiplier.
    pub fn from_graph(phi: &GraphLaplacian) -> Self {
        let p = phi.nodes();
        Self { z: phi.matrix().clone(), dual: Matrix::zeros(p, p) }
    }
}

#[derive(Debug, Clone)]
pub struct Step2Output {
    /// The projected iterate `z`; always a valid Laplacian.
    pub phi: GraphLaplacian,
    /// The last unconstrained iterate.
    pub unconstrained: Matrix,
    pub dual: Matrix,
    pub iterations: usize,
    /// `‖z − Φ‖_F` at exit.
    pub residual: f64,
    pub converged: bool,
}

impl Step2Output {
    pub fn warm(&self) -> Step2Warm {
        Step2Warm { z: self.phi.matrix().clone(), dual: self.dual.clone() }
    }
}

/// Runs the graph step until `‖z − Φ‖_F / max(1, ‖Φ‖_F) ≤ step2_tol` or
/// `step2_max_iter`.
pub fn step2_graph(l: &Matrix, cfg: &SolverConfig, warm: Option<&Step2Warm>) -> Result<Step2Output> {
    cfg.validate()?;
    if l.iter().any(|v| !v.is_finite()) {
        return Err(invalid("low-rank input contains non-finite entries"));
    }
    let p = l.nrows();
    let rho = cfg.rho;
    let denominator = match cfg.phi_denominator {
        PhiDenominator::Derived => 2.0 * cfg.beta + rho,
        PhiDenominator::Printed => cfg.beta / 2.0 + rho,
    };
    let smooth = l * l.transpose() * cfg.gamma;
    let start = warm.cloned().unwrap_or_else(|| Step2Warm::zeros(p));
    if start.z.shape() != (p, p) || start.dual.shape() != (p, p) {
        return Err(invalid(format!("warm start must be {p}x{p}")));
    }
    let Step2Warm { mut z, mut dual } = start;
    let mut phi = z.clone();
    let mut feasible = None;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=cfg.step2_max_iter {
        iterations = k;
        phi = (&z * rho + &dual - &smooth) / denominator;
        let projected = project_to_laplacian_set(&(&phi - &dual / rho))?;
        z = projected.matrix().clone();
        feasible = Some(projected);
        let gap = &z - &phi;
        let step = match cfg.dual_step {
            DualStep::Diminishing => 1.0 / k as f64,
            DualStep::Constant => rho,
        };
        dual += &gap * step;
        residual = gap.norm();
        if !residual.is_finite() || dual.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { what: "step 2", iteration: k });
        }
        if residual / phi.norm().max(1.0) <= cfg.step2_tol {
            converged = true;
            break;
        }
    }
    Ok(Step2Output { phi: feasible.expect("at least one iteration"), unconstrained: phi, dual, iterations, residual, converged })
}

/// `γ tr(Lᵀ Φ L) + β‖Φ‖_F²`.
pub fn step2_objective(l: &Matrix, phi: &Matrix, cfg: &SolverConfig) -> f64 {
    cfg.gamma * (l.transpose() * phi * l).trace() + cfg.beta * phi.norm_squared()
}
