//! Graph representations, validity checks, construction and distortion.
//!
//! A graph on `p` nodes is carried either as its weighted [`Adjacency`] `W`
//! or its combinatorial [`GraphLaplacian`] `Φ = D - W`. Both are validated
//! newtypes over dense `p×p` matrices.

mod coherence;
mod knn;

pub use coherence::{coherence_adjacency, CoherenceParams};
pub use knn::knn_graph;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::kernels::Matrix;

/// Symmetry tolerance used by the newtype constructors.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Tolerance for validity checks on Laplacians produced by this crate.
pub const LAPLACIAN_TOL: f64 = 1e-8;

/// Symmetric, nonnegative, zero-diagonal similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency(Matrix);

impl Adjacency {
    pub fn new(weights: Matrix) -> Result<Self> {
        let p = weights.nrows();
        if weights.ncols() != p {
            return Err(invalid(format!("adjacency must be square, got {}x{}", p, weights.ncols())));
        }
        for i in 0..p {
            if weights[(i, i)] != 0.0 {
                return Err(invalid(format!("adjacency diagonal entry {i} is nonzero")));
            }
            for j in 0..p {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(invalid(format!("adjacency entry ({i},{j}) = {w} is not a nonnegative weight")));
                }
                if (w - weights[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(invalid(format!("adjacency is asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self(weights))
    }

    pub fn zeros(p: usize) -> Self {
        Self(Matrix::zeros(p, p))
    }

    /// Recovers `W = -offdiag(Φ)`.
    pub fn from_laplacian(phi: &GraphLaplacian) -> Self {
        let m = phi.matrix();
        Self(Matrix::from_fn(m.nrows(), m.ncols(), |i, j| if i == j { 0.0 } else { (-m[(i, j)]).max(0.0) }))
    }

    pub fn weights(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.0.row_iter().map(|r| r.sum()).collect()
    }

    /// Number of undirected edges with positive weight.
    pub fn edge_count(&self) -> usize {
        let p = self.nodes();
        (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).filter(|&(i, j)| self.0[(i, j)] > 0.0).count()
    }

    /// Connected components of the support graph.
    pub fn component_count(&self) -> usize {
        let p = self.nodes();
        let mut seen = vec![false; p];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..p {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                for j in 0..p {
                    if !seen[j] && self.0[(i, j)] > 0.0 {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        count
    }
}

/// A member of the valid-Laplacian set: symmetric, nonpositive off-diagonal,
/// zero row sums (hence positive semidefinite).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian(Matrix);

impl GraphLaplacian {
    /// Validates `m` at tolerance `tol`.
    pub fn new(m: Matrix, tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(invalid(format!("Laplacian must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        if !is_valid_laplacian(&m, tol) {
            return Err(invalid("matrix is not a valid graph Laplacian"));
        }
        Ok(Self(m))
    }

    pub fn zeros(p: usize) -> Self {
        Self(Matrix::zeros(p, p))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn nodes(&self) -> usize {
        self.0.nrows()
    }
}

/// `Φ = D - W`.
pub fn laplacian_from_adjacency(w: &Adjacency) -> GraphLaplacian {
    let mut phi = -w.weights().clone();
    for (i, d) in w.degrees().into_iter().enumerate() {
        phi[(i, i)] = d;
    }
    GraphLaplacian(phi)
}

/// Checks symmetry, nonpositive off-diagonals and zero row sums within `tol`.
pub fn is_valid_laplacian(m: &Matrix, tol: f64) -> bool {
    if !m.is_square() || m.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let p = m.nrows();
    for i in 0..p {
        let mut row = 0.0;
        for j in 0..p {
            let v = m[(i, j)];
            row += v;
            if i != j && (v > tol || (v - m[(j, i)]).abs() > tol) {
                return false;
            }
        }
        if row.abs() > tol {
            return false;
        }
    }
    true
}

/// Maps a square matrix into the valid-Laplacian set: symmetrize, clip the
/// off-diagonals at zero from above, rebuild the diagonal from the row sums.
///
/// Idempotent. This is not the exact Euclidean projection: the diagonal is
/// treated as dependent and excluded from the distance being minimized.
pub fn project_to_laplacian_set(m: &Matrix) -> Result<GraphLaplacian> {
    if !m.is_square() {
        return Err(invalid(format!("projection needs a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    let p = m.nrows();
    let mut out = Matrix::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let v = (0.5 * (m[(i, j)] + m[(j, i)])).min(0.0);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    for i in 0..p {
        let off: f64 = (0..p).filter(|&j| j != i).map(|j| out[(i, j)]).sum();
        out[(i, i)] = -off;
    }
    Ok(GraphLaplacian(out))
}

/// Erdős–Rényi graph with edge probability `q` and `U(0,1)` weights.
pub fn random_weighted_graph<R: Rng + ?Sized>(p: usize, q: f64, rng: &mut R) -> Result<Adjacency> {
    if p < 2 {
        return Err(invalid(format!("random graph needs p >= 2, got {p}")));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid(format!("edge probability must lie in [0,1], got {q}")));
    }
    let mut w = Matrix::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            if rng.random::<f64>() < q {
                // open interval: an edge drawn with weight 0 would be invisible
                let a = loop {
                    let a: f64 = rng.random();
                    if a > 0.0 {
                        break a;
                    }
                };
                w[(i, j)] = a;
                w[(j, i)] = a;
            }
        }
    }
    Ok(Adjacency(w))
}

/// Eigenvectors for the `r` smallest Laplacian eigenvalues.
#[derive(Debug, Clone)]
pub struct SmoothBasis {
    /// `p×r`, orthonormal columns.
    pub vectors: Matrix,
    /// Non-decreasing.
    pub eigenvalues: Vec<f64>,
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues ascending.
/// Each eigenvector is signed so its largest-magnitude entry is positive.
pub fn sorted_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !m.is_square() || m.iter().any(|x| !x.is_finite()) {
        return Err(invalid("eigendecomposition needs a finite square matrix"));
    }
    let eig = nalgebra::SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| invalid("symmetric eigendecomposition did not converge"))?;
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(m.nrows(), m.nrows());
    for (c, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(c, &v);
    }
    Ok((values, vectors))
}

pub fn smooth_basis(phi: &GraphLaplacian, r: usize) -> Result<SmoothBasis> {
    let p = phi.nodes();
    if r == 0 || r > p {
        return Err(invalid(format!("basis size must satisfy 1 <= r <= p = {p}, got {r}")));
    }
    let (values, vectors) = sorted_eigen(phi.matrix())?;
    Ok(SmoothBasis { vectors: vectors.columns(0, r).into_owned(), eigenvalues: values[..r].to_vec() })
}

/// Which off-diagonal entries are distortion candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistortionMode {
    /// Existing edges only; the zero pattern is preserved.
    WeightsOnly,
    /// Every node pair; new edges may appear.
    Topology,
}

impl std::str::FromStr for DistortionMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weights_only" => Ok(Self::WeightsOnly),
            "topology" => Ok(Self::Topology),
            other => Err(invalid(format!("unknown distortion mode {other:?} (weights_only|topology)"))),
        }
    }
}

/// Random additive distortion of a Laplacian's off-diagonal entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplacianDistortion {
    pub probability: f64,
    pub mode: DistortionMode,
}

impl LaplacianDistortion {
    pub fn new(probability: f64, mode: DistortionMode) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(invalid(format!("distortion probability must lie in [0,1], got {probability}")));
        }
        Ok(Self { probability, mode })
    }
}

/// The raw off-diagonal distortion `ΔΦ`: each candidate pair is hit with
/// probability `s` and its entry decreased by a `U(0,1)` amplitude (which adds
/// edge weight). The diagonal of the result is zero.
///
/// Every pair consumes the same two draws whatever `s` is, so one stream
/// yields nested supports as `s` grows.
pub fn laplacian_distortion_matrix<R: Rng + ?Sized>(
    phi0: &GraphLaplacian,
    d: &LaplacianDistortion,
    rng: &mut R,
) -> Matrix {
    let p = phi0.nodes();
    let m = phi0.matrix();
    let mut delta = Matrix::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let candidate = match d.mode {
                DistortionMode::WeightsOnly => m[(i, j)] != 0.0,
                DistortionMode::Topology => true,
            };
            let (u, a): (f64, f64) = (rng.random(), rng.random());
            if candidate && u < d.probability {
                delta[(i, j)] = -a;
                delta[(j, i)] = -a;
            }
        }
    }
    delta
}

/// `Π(Φ0 + ΔΦ)`: the distorted graph, re-projected so it is a valid Laplacian.
pub fn distort_laplacian<R: Rng + ?Sized>(
    phi0: &GraphLaplacian,
    d: &LaplacianDistortion,
    rng: &mut R,
) -> GraphLaplacian {
    let delta = laplacian_distortion_matrix(phi0, d, rng);
    project_to_laplacian_set(&(phi0.matrix() + delta)).expect("square by construction")
}
