//! Shrinkage primitives and matrix functionals shared by the solvers.
//!
//! All routines are pure functions over dense `f64` matrices. The SVD backend
//! is nalgebra's bidiagonal QR, always sorted so singular values come out in
//! non-increasing order.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// Dense real matrix (p×n data, p×p graphs).
pub type Matrix = DMatrix<f64>;

/// Singular values below this fraction of the largest one count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

const SVD_MAX_ITER: usize = 10_000;

/// A nonnegative shrinkage level.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ShrinkThreshold(f64);

impl ShrinkThreshold {
    pub fn new(value: f64) -> Result<Self> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(invalid(format!("shrink threshold must be finite and >= 0, got {value}")));
        }
        Ok(Self(value))
    }

    pub const fn zero() -> Self {
        Self(0.0)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `sgn(x) * max(|x| - tau, 0)`.
#[inline]
pub fn soft_threshold(x: f64, tau: ShrinkThreshold) -> f64 {
    let t = tau.value();
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Entrywise [`soft_threshold`].
pub fn soft_threshold_matrix(m: &Matrix, tau: ShrinkThreshold) -> Matrix {
    m.map(|x| soft_threshold(x, tau))
}

/// Thin SVD with singular values in non-increasing order.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Matrix,
    pub singular_values: DVector<f64>,
    pub v_t: Matrix,
}

fn check_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{what} contains non-finite entries")))
    }
}

pub fn thin_svd(m: &Matrix) -> Result<ThinSvd> {
    check_finite(m, "SVD input")?;
    let svd = nalgebra::SVD::try_new(m.clone(), true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| invalid("SVD did not converge"))?;
    Ok(ThinSvd {
        u: svd.u.expect("u requested"),
        singular_values: svd.singular_values,
        v_t: svd.v_t.expect("v_t requested"),
    })
}

/// Singular values only, non-increasing.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    check_finite(m, "SVD input")?;
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let svd = nalgebra::SVD::try_new(m.clone(), false, false, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| invalid("SVD did not converge"))?;
    Ok(svd.singular_values.iter().copied().collect())
}

/// Singular-value thresholding `U diag(max(σ - τ, 0)) Vᵀ`.
pub fn svt(j: &Matrix, tau: ShrinkThreshold) -> Result<Matrix> {
    svt_with_spectrum(j, tau).map(|(l, _)| l)
}

/// [`svt`] that also hands back the singular values of the input.
pub fn svt_with_spectrum(j: &Matrix, tau: ShrinkThreshold) -> Result<(Matrix, Vec<f64>)> {
    let (rows, cols) = j.shape();
    if j.is_empty() {
        return Ok((Matrix::zeros(rows, cols), Vec::new()));
    }
    let svd = thin_svd(j)?;
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let t = tau.value();
    let kept = sigma.iter().take_while(|&&s| s > t).count();
    let mut out = Matrix::zeros(rows, cols);
    if kept > 0 {
        let mut us = svd.u.columns(0, kept).into_owned();
        for (c, s) in sigma.iter().take(kept).enumerate() {
            us.column_mut(c).scale_mut(s - t);
        }
        us.mul_to(&svd.v_t.rows(0, kept), &mut out);
    }
    Ok((out, sigma))
}

/// Frobenius, nuclear and entrywise-ℓ1 norms of a matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub frobenius: f64,
    pub nuclear: f64,
    pub entrywise_l1: f64,
}

/// Computes [`Norms`]. The nuclear norm is NaN when the SVD cannot be formed
/// (non-finite input).
pub fn norms(m: &Matrix) -> Norms {
    Norms {
        frobenius: m.norm(),
        nuclear: nuclear_norm(m),
        entrywise_l1: m.iter().map(|x| x.abs()).sum(),
    }
}

pub fn nuclear_norm(m: &Matrix) -> f64 {
    singular_values(m).map(|s| s.iter().sum()).unwrap_or(f64::NAN)
}

/// Number of singular values strictly above `rel_tol * σ_max`; 0 for the zero
/// matrix.
pub fn rank_by_tolerance(m: &Matrix, rel_tol: f64) -> usize {
    let sigma = match singular_values(m) {
        Ok(s) => s,
        Err(_) => return 0,
    };
    rank_of_spectrum(&sigma, rel_tol)
}

pub(crate) fn rank_of_spectrum(sigma: &[f64], rel_tol: f64) -> usize {
    let smax = sigma.iter().copied().fold(0.0_f64, f64::max);
    if smax <= 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > rel_tol * smax).count()
}
