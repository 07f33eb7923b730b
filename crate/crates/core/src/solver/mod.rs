//! Alternating low-rank / graph estimation.
//!
//! Step 1 recovers `(L, M)` for a fixed Laplacian with a split-variable ADMM;
//! step 2 refines the Laplacian for a fixed `L`; [`lge`] alternates the two.
//! [`rpca`] is step 1 with the graph term switched off.

mod config;
mod lge;
mod step1;
mod step2;

pub use config::{DualStep, PhiDenominator, SolverConfig};
pub use lge::{lge, objective, rpca, LgeSolution, OuterRecord, RpcaOutput};
pub use step1::{step1_lowrank, Step1Iterate, Step1Output, Step1Record, Step1Solver, Step1State};
pub use step2::{step2_graph, step2_objective, Step2Output, Step2Warm};
