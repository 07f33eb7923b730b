use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// Denominator of the unconstrained Laplacian update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiDenominator {
    /// `2β + ρ`, the stationarity point of the augmented Lagrangian.
    Derived,
    /// `β/2 + ρ`.
    Printed,
}

/// Step size of the graph-step dual ascent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualStep {
    /// `1/k` at inner iteration `k`.
    Diminishing,
    /// `ρ` at every iteration.
    Constant,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(invalid(format!(
                        concat!("unknown ", stringify!($ty), " {:?}; expected one of: ", $($text, " "),+),
                        other
                    ))),
                }
            }
        }
    };
}

text_enum!(PhiDenominator { Derived => "derived", Printed => "printed" });
text_enum!(DualStep { Diminishing => "diminishing", Constant => "constant" });

/// Every tunable of the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Weight of the graph smoothness term.
    pub gamma: f64,
    /// Weight of the sparse ℓ1 term.
    pub delta: f64,
    /// Weight of the Laplacian Frobenius term.
    pub beta: f64,
    /// Step-1 penalty on `X = L + M`.
    pub r1: f64,
    /// Step-1 penalty on `L = K`.
    pub r2: f64,
    /// Step-2 penalty.
    pub rho: f64,
    pub step1_tol: f64,
    pub step2_tol: f64,
    /// Relative objective change that ends the outer loop.
    pub outer_tol: f64,
    pub step1_max_iter: usize,
    pub step2_max_iter: usize,
    pub outer_max_iter: usize,
    pub phi_denominator: PhiDenominator,
    pub dual_step: DualStep,
}

/// `r2 = 5` keeps `τ1 = 1/3` small next to the singular values of unit-scale
/// data; with `r1 = r2 = 1` the singular-value threshold removes most of the
/// signal in the first iterations. `β = 0.4` puts the learned graph weights,
/// `γ·(LLᵀ)₊/(2β)`, at roughly the scale of the generating graph.
impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            delta: 0.5,
            beta: 0.4,
            r1: 1.0,
            r2: 5.0,
            rho: 1.0,
            step1_tol: 1e-6,
            step2_tol: 1e-6,
            outer_tol: 1e-6,
            step1_max_iter: 500,
            step2_max_iter: 500,
            outer_max_iter: 20,
            phi_denominator: PhiDenominator::Derived,
            dual_step: DualStep::Diminishing,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [("gamma", self.gamma), ("delta", self.delta), ("beta", self.beta)];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        let positive = [
            ("r1", self.r1),
            ("r2", self.r2),
            ("rho", self.rho),
            ("step1_tol", self.step1_tol),
            ("step2_tol", self.step2_tol),
            ("outer_tol", self.outer_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        let caps = [
            ("step1_max_iter", self.step1_max_iter),
            ("step2_max_iter", self.step2_max_iter),
            ("outer_max_iter", self.outer_max_iter),
        ];
        for (name, v) in caps {
            if v == 0 {
                return Err(invalid(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Singular-value threshold `2 / (r1 + r2)`.
    pub fn tau1(&self) -> f64 {
        2.0 / (self.r1 + self.r2)
    }

    /// Entrywise threshold `δ / r1`.
    pub fn tau2(&self) -> f64 {
        self.delta / self.r1
    }

    pub const KEYS: [&'static str; 14] = [
        "gamma",
        "delta",
        "beta",
        "r1",
        "r2",
        "rho",
        "step1_tol",
        "step2_tol",
        "outer_tol",
        "step1_max_iter",
        "step2_max_iter",
        "outer_max_iter",
        "phi_denominator",
        "dual_step",
    ];

    /// Sets one field from its text form. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim().parse().map_err(|_| invalid(format!("bad value {v:?} for {key}")))
        }
        match key {
            "gamma" => self.gamma = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "r1" => self.r1 = num(key, value)?,
            "r2" => self.r2 = num(key, value)?,
            "rho" => self.rho = num(key, value)?,
            "step1_tol" => self.step1_tol = num(key, value)?,
            "step2_tol" => self.step2_tol = num(key, value)?,
            "outer_tol" => self.outer_tol = num(key, value)?,
            "step1_max_iter" => self.step1_max_iter = num(key, value)?,
            "step2_max_iter" => self.step2_max_iter = num(key, value)?,
            "outer_max_iter" => self.outer_max_iter = num(key, value)?,
            "phi_denominator" => self.phi_denominator = value.trim().parse()?,
            "dual_step" => self.dual_step = value.trim().parse()?,
            other => return Err(invalid(format!("unknown solver key {other:?}"))),
        }
        Ok(())
    }

    /// All fields as `(key, value)` text pairs, in [`Self::KEYS`] order.
    /// Floats use the shortest round-trip representation.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let values = [
            self.gamma.to_string(),
            self.delta.to_string(),
            self.beta.to_string(),
            self.r1.to_string(),
            self.r2.to_string(),
            self.rho.to_string(),
            format!("{:e}", self.step1_tol),
            format!("{:e}", self.step2_tol),
            format!("{:e}", self.outer_tol),
            self.step1_max_iter.to_string(),
            self.step2_max_iter.to_string(),
            self.outer_max_iter.to_string(),
            self.phi_denominator.to_string(),
            self.dual_step.to_string(),
        ];
        Self::KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    /// Same config with the graph term disabled.
    pub fn without_graph(&self) -> Self {
        Self { gamma: 0.0, ..self.clone() }
    }
}
