//! Ground-truth generation for graph-smooth low-rank data and its corruption.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::graph::{laplacian_from_adjacency, random_weighted_graph, smooth_basis, Adjacency, GraphLaplacian};
use crate::kernels::Matrix;

/// Parameters of the ground-truth low-rank model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowRankParams {
    /// Graph nodes (rows).
    pub p: usize,
    /// Samples (columns).
    pub n: usize,
    /// Rank of the clean component.
    pub r: usize,
    /// Edge probability of the random graph.
    pub q: f64,
    /// Mean of the coefficient distribution; its variance is `1/p`.
    pub mu: f64,
}

impl Default for LowRankParams {
    fn default() -> Self {
        Self { p: 30, n: 50, r: 3, q: 0.3, mu: 0.0 }
    }
}

/// How nonzero corruption amplitudes are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmplitudeLaw {
    /// ±1 with equal probability.
    SignedUnit,
    /// `U(0, c)` magnitude, with a fair random sign when `signed`.
    Uniform { c: f64, signed: bool },
}

impl AmplitudeLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            AmplitudeLaw::Uniform { c, .. } if !(c > 0.0 && c.is_finite()) => {
                Err(invalid(format!("uniform amplitude bound must be > 0, got {c}")))
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            AmplitudeLaw::SignedUnit => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            AmplitudeLaw::Uniform { c, signed } => {
                let a = c * rng.random::<f64>();
                if signed && rng.random::<bool>() {
                    -a
                } else {
                    a
                }
            }
        }
    }

    /// Text form used in manifests: `signed_unit`, `uniform:<c>` or
    /// `uniform_positive:<c>`.
    pub fn label(&self) -> String {
        match *self {
            AmplitudeLaw::SignedUnit => "signed_unit".into(),
            AmplitudeLaw::Uniform { c, signed: true } => format!("uniform:{c}"),
            AmplitudeLaw::Uniform { c, signed: false } => format!("uniform_positive:{c}"),
        }
    }
}

impl std::str::FromStr for AmplitudeLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let law = if s == "signed_unit" {
            AmplitudeLaw::SignedUnit
        } else if let Some(c) = s.strip_prefix("uniform:") {
            AmplitudeLaw::Uniform { c: parse_bound(c)?, signed: true }
        } else if let Some(c) = s.strip_prefix("uniform_positive:") {
            AmplitudeLaw::Uniform { c: parse_bound(c)?, signed: false }
        } else {
            return Err(invalid(format!(
                "unknown amplitude law {s:?} (signed_unit | uniform:<c> | uniform_positive:<c>)"
            )));
        };
        law.validate()?;
        Ok(law)
    }
}

fn parse_bound(s: &str) -> Result<f64> {
    s.parse().map_err(|_| invalid(format!("bad amplitude bound {s:?}")))
}

/// Sparse corruption model: Bernoulli support with density `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub density: f64,
    pub amplitude: AmplitudeLaw,
}

impl PerturbationSpec {
    pub fn new(density: f64, amplitude: AmplitudeLaw) -> Result<Self> {
        if !(0.0..=1.0).contains(&density) {
            return Err(invalid(format!("density must lie in [0,1], got {density}")));
        }
        amplitude.validate()?;
        Ok(Self { density, amplitude })
    }
}

/// Additive distortion applied to a clean low-rank matrix. Same law as
/// [`PerturbationSpec`].
pub type LowrankDistortionSpec = PerturbationSpec;

/// Ground truth bundle: `X = L0 + M`, `L0 = P Yᵀ`, graph `W`, `Φ0`.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub params: LowRankParams,
    pub seed: u64,
    pub x: Matrix,
    pub lowrank: Matrix,
    pub sparse: Matrix,
    pub laplacian: GraphLaplacian,
    pub adjacency: Adjacency,
    pub basis: Matrix,
    pub coefficients: Matrix,
    /// Connected components of the ground-truth graph.
    pub components: usize,
    pub perturbation: Option<PerturbationSpec>,
}

impl SyntheticDataset {
    /// Replaces the sparse part and recomputes `X = L0 + M`.
    pub fn with_perturbation(mut self, m: Matrix, spec: PerturbationSpec) -> Result<Self> {
        if m.shape() != self.lowrank.shape() {
            return Err(invalid("perturbation shape does not match the low-rank component"));
        }
        self.x = &self.lowrank + &m;
        self.sparse = m;
        self.perturbation = Some(spec);
        Ok(self)
    }

    /// Draws a perturbation from `rng` and applies it.
    pub fn perturb<R: Rng + ?Sized>(self, spec: PerturbationSpec, rng: &mut R) -> Result<Self> {
        let (p, n) = self.lowrank.shape();
        let m = generate_perturbation(p, n, &spec, rng)?;
        self.with_perturbation(m, spec)
    }
}

/// Builds the clean low-rank component from a random graph's smoothest
/// eigenvectors. `M` is zero.
pub fn generate_lowrank<R: Rng + ?Sized>(params: LowRankParams, seed: u64, rng: &mut R) -> Result<SyntheticDataset> {
    let LowRankParams { p, n, r, q, mu } = params;
    if r == 0 || r > p {
        return Err(invalid(format!("rank must satisfy 1 <= r <= p = {p}, got {r}")));
    }
    if n == 0 {
        return Err(invalid("need at least one sample"));
    }
    if !mu.is_finite() {
        return Err(invalid("mu must be finite"));
    }
    let adjacency = random_weighted_graph(p, q, rng)?;
    let laplacian = laplacian_from_adjacency(&adjacency);
    let components = adjacency.component_count();
    if components > 1 {
        log::debug!("ground-truth graph has {components} components");
    }
    let basis = smooth_basis(&laplacian, r)?.vectors;
    let normal = Normal::new(mu, (1.0 / p as f64).sqrt()).map_err(|e| invalid(e.to_string()))?;
    let coefficients = Matrix::from_fn(n, r, |_, _| normal.sample(rng));
    let lowrank = &basis * coefficients.transpose();
    Ok(SyntheticDataset {
        params,
        seed,
        x: lowrank.clone(),
        sparse: Matrix::zeros(p, n),
        lowrank,
        laplacian,
        adjacency,
        basis,
        coefficients,
        components,
        perturbation: None,
    })
}

/// Sparse corruption: each entry nonzero independently with probability
/// `spec.density`. Entries are visited row by row and each draws its
/// threshold and amplitude whether or not it is hit, so for one stream the
/// support is nested in the density and the values scale with the bound `c`.
pub fn generate_perturbation<R: Rng + ?Sized>(p: usize, n: usize, spec: &PerturbationSpec, rng: &mut R) -> Result<Matrix> {
    let spec = PerturbationSpec::new(spec.density, spec.amplitude)?;
    let mut m = Matrix::zeros(p, n);
    for i in 0..p {
        for j in 0..n {
            let u: f64 = rng.random();
            let a = spec.amplitude.sample(rng);
            if u < spec.density {
                m[(i, j)] = a;
            }
        }
    }
    Ok(m)
}

/// `L̃ = L0 + ΔL` with `ΔL` drawn like [`generate_perturbation`].
pub fn distort_lowrank<R: Rng + ?Sized>(l0: &Matrix, spec: &LowrankDistortionSpec, rng: &mut R) -> Result<Matrix> {
    Ok(l0 + generate_perturbation(l0.nrows(), l0.ncols(), spec, rng)?)
}

/// `‖estimate − truth‖_F / ‖truth‖_F`.
pub fn rel_error(estimate: &Matrix, truth: &Matrix) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(invalid(format!("shape mismatch: {:?} vs {:?}", estimate.shape(), truth.shape())));
    }
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(Error::DegenerateInput("reference matrix has zero norm".into()));
    }
    Ok((estimate - truth).norm() / denom)
}
