use super::Adjacency;
use crate::error::{invalid, Result};
use crate::kernels::Matrix;

/// Relative slack under which two distances count as tied.
const TIE_TOL: f64 = 1e-12;

fn pairwise_distances(x: &Matrix) -> Matrix {
    let p = x.nrows();
    let mut d = Matrix::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let dist = (x.row(i) - x.row(j)).norm();
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    d
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Directed k-nearest-neighbour sets over the rows of `x`, Euclidean distance.
/// Neighbours tied with the k-th distance are all kept.
pub(crate) fn neighbor_sets(x: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let p = x.nrows();
    let dist = pairwise_distances(x);
    (0..p)
        .map(|i| {
            let mut others: Vec<usize> = (0..p).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b)));
            let kth = dist[(i, others[k - 1])];
            others.into_iter().take_while(|&j| dist[(i, j)] <= kth * (1.0 + TIE_TOL)).collect()
        })
        .collect()
}

/// Builds a k-NN similarity graph over the rows of `x`.
///
/// The directed relation is symmetrized by union. Edge weights use a Gaussian
/// kernel `exp(-d²/σ²)` whose bandwidth σ is the median pairwise distance, so
/// the graph is invariant to rescaling `x`.
pub fn knn_graph(x: &Matrix, k: usize) -> Result<Adjacency> {
    let p = x.nrows();
    if k == 0 || k >= p {
        return Err(invalid(format!("k-NN needs 1 <= k < p = {p}, got k = {k}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("k-NN input contains non-finite entries"));
    }
    let dist = pairwise_distances(x);
    let sigma = median((0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).map(|(i, j)| dist[(i, j)]).collect());
    let kernel = |d: f64| if sigma > 0.0 { (-(d * d) / (sigma * sigma)).exp() } else { 1.0 };

    let mut w = Matrix::zeros(p, p);
    for (i, neighbors) in neighbor_sets(x, k).into_iter().enumerate() {
        for j in neighbors {
            let v = kernel(dist[(i, j)]);
            w[(i, j)] = w[(i, j)].max(v);
            w[(j, i)] = w[(j, i)].max(v);
        }
    }
    Adjacency::new(w)
}
