//! Graph-regularized low-rank + sparse recovery for a fixed Laplacian.
//!
//! The problem `min ‖L‖_* + δ‖M‖_1 + γ tr(Kᵀ Φ K)` s.t. `X = L + M`, `L = K`
//! is solved with six updates per iteration:
//!
//! ```text
//! J  = (r1 (X - M + z1/r1) + r2 (K + z2/r2)) / (r1 + r2)
//! L  = D_τ1(J)                       τ1 = 2 / (r1 + r2)
//! M  = Ω_τ2(X - L + z1/r1)           τ2 = δ / r1
//! K  = r2 (γΦ + r2 I)⁻¹ (L - z2/r2)
//! z1 = z1 + r1 (X - L - M)
//! z2 = z2 + r2 (K - L)
//! ```

use nalgebra::linalg::{Cholesky, LU};

use crate::error::{invalid, Error, Result};
use crate::graph::GraphLaplacian;
use crate::kernels::{soft_threshold_matrix, svt_with_spectrum, Matrix, ShrinkThreshold};

use super::SolverConfig;

/// Primal and dual iterates of step 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Step1State {
    pub lowrank: Matrix,
    pub sparse: Matrix,
    /// Split copy `K` of the low-rank iterate.
    pub split: Matrix,
    /// Multiplier `z1` of `X = L + M`.
    pub dual_data: Matrix,
    /// Multiplier `z2` of `L = K`.
    pub dual_split: Matrix,
    /// Number of updates applied since the all-zero start.
    pub iteration: usize,
}

impl Step1State {
    /// Cold start: every iterate zero.
    pub fn zeros(p: usize, n: usize) -> Self {
        let z = Matrix::zeros(p, n);
        Self { lowrank: z.clone(), sparse: z.clone(), split: z.clone(), dual_data: z.clone(), dual_split: z, iteration: 0 }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.lowrank.shape()
    }

    fn is_finite(&self) -> bool {
        [&self.lowrank, &self.sparse, &self.split, &self.dual_data, &self.dual_split]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
    }
}

/// What one update produced besides the new state.
#[derive(Debug, Clone)]
pub struct Step1Iterate {
    /// `‖X − L − M‖_F / ‖X‖_F`.
    pub primal_residual: f64,
    /// `‖K − L‖_F / max(1, ‖L‖_F)`.
    pub split_residual: f64,
    /// Singular values of `J`, non-increasing.
    pub j_singular_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step1Record {
    pub iteration: usize,
    pub primal_residual: f64,
    pub split_residual: f64,
}

/// Step 1 bound to one data matrix and one graph.
#[derive(Debug, Clone)]
pub struct Step1Solver<'a> {
    x: &'a Matrix,
    x_norm: f64,
    /// `r2 (γΦ + r2 I)⁻¹`.
    k_operator: Matrix,
    tau1: ShrinkThreshold,
    tau2: ShrinkThreshold,
    r1: f64,
    r2: f64,
}

impl<'a> Step1Solver<'a> {
    /// Binds `x` and a symmetric `p×p` graph matrix. `phi` need not be a valid
    /// Laplacian (distorted graphs are allowed) as long as `γΦ + r2 I` is
    /// invertible.
    pub fn new(x: &'a Matrix, phi: &Matrix, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let p = x.nrows();
        if phi.shape() != (p, p) {
            return Err(invalid(format!("graph is {}x{}, data has {p} rows", phi.nrows(), phi.ncols())));
        }
        if x.iter().chain(phi.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("step 1 inputs contain non-finite entries"));
        }
        let k_operator = if cfg.gamma == 0.0 {
            Matrix::identity(p, p)
        } else {
            let system = phi * cfg.gamma + Matrix::identity(p, p) * cfg.r2;
            let inverse = match Cholesky::new(system.clone()) {
                Some(chol) => chol.inverse(),
                None => LU::new(system)
                    .try_inverse()
                    .ok_or_else(|| invalid("γΦ + r2·I is singular"))?,
            };
            inverse * cfg.r2
        };
        Ok(Self {
            x,
            x_norm: x.norm(),
            k_operator,
            tau1: ShrinkThreshold::new(cfg.tau1())?,
            tau2: ShrinkThreshold::new(cfg.tau2())?,
            r1: cfg.r1,
            r2: cfg.r2,
        })
    }

    pub fn data(&self) -> &Matrix {
        self.x
    }

    /// The weighted average `J` that the next update will threshold.
    pub fn j_matrix(&self, s: &Step1State) -> Matrix {
        let (r1, r2) = (self.r1, self.r2);
        ((self.x - &s.sparse) * r1 + &s.dual_data + &s.split * r2 + &s.dual_split) / (r1 + r2)
    }

    /// Applies one full update in place.
    pub fn step(&self, s: &mut Step1State) -> Result<Step1Iterate> {
        if s.shape() != self.x.shape() {
            return Err(invalid("state shape does not match the data"));
        }
        let (r1, r2) = (self.r1, self.r2);
        let j = self.j_matrix(s);
        let (lowrank, spectrum) = svt_with_spectrum(&j, self.tau1).map_err(|_| Error::Divergence {
            what: "step 1",
            iteration: s.iteration + 1,
        })?;
        let sparse = soft_threshold_matrix(&(self.x - &lowrank + &s.dual_data / r1), self.tau2);
        let split = &self.k_operator * (&lowrank - &s.dual_split / r2);
        let primal = self.x - &lowrank - &sparse;
        s.dual_data += &primal * r1;
        s.dual_split += (&split - &lowrank) * r2;

        let primal_residual = primal.norm() / self.x_norm.max(f64::MIN_POSITIVE);
        let split_residual = (&split - &lowrank).norm() / lowrank.norm().max(1.0);
        s.lowrank = lowrank;
        s.sparse = sparse;
        s.split = split;
        s.iteration += 1;
        if !s.is_finite() {
            return Err(Error::Divergence { what: "step 1", iteration: s.iteration });
        }
        Ok(Step1Iterate { primal_residual, split_residual, j_singular_values: spectrum })
    }
}

#[derive(Debug, Clone)]
pub struct Step1Output {
    pub lowrank: Matrix,
    pub sparse: Matrix,
    pub state: Step1State,
    pub trace: Vec<Step1Record>,
    /// Both residuals reached `step1_tol` before the iteration cap.
    pub converged: bool,
}

impl Step1Output {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_primal_residual(&self) -> f64 {
        self.trace.last().map_or(0.0, |r| r.primal_residual)
    }
}

/// Runs step 1 from `warm` (or the all-zero state) until both residuals drop
/// below `cfg.step1_tol` or `cfg.step1_max_iter` updates have been applied.
pub fn step1_lowrank(x: &Matrix, phi: &GraphLaplacian, cfg: &SolverConfig, warm: Option<Step1State>) -> Result<Step1Output> {
    run_step1(&Step1Solver::new(x, phi.matrix(), cfg)?, cfg.step1_tol, cfg.step1_max_iter, warm)
}

pub(crate) fn run_step1(solver: &Step1Solver<'_>, tol: f64, max_iter: usize, warm: Option<Step1State>) -> Result<Step1Output> {
    let (p, n) = solver.data().shape();
    let mut state = warm.unwrap_or_else(|| Step1State::zeros(p, n));
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let it = solver.step(&mut state)?;
        trace.push(Step1Record {
            iteration: state.iteration,
            primal_residual: it.primal_residual,
            split_residual: it.split_residual,
        });
        if it.primal_residual <= tol && it.split_residual <= tol {
            converged = true;
            break;
        }
    }
    Ok(Step1Output { lowrank: state.lowrank.clone(), sparse: state.sparse.clone(), state, trace, converged })
}
