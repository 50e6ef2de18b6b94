//! Classical (Torgerson) MDS and metric MDS by SMACOF stress majorization.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{RfaeError, Result};
use crate::linalg::top_eigenpairs;
use crate::scalar::Scalar;

/// Classical MDS: top eigenvectors of the double-centred squared distances,
/// scaled by the square roots of their (clamped) eigenvalues.
pub fn classical_mds<T: Scalar>(dist: ArrayView2<T>, dim: usize, seed: u64) -> Result<Array2<T>> {
    let n = dist.nrows();
    if dist.ncols() != n {
        return Err(RfaeError::DimensionMismatch {
            expected: n,
            found: dist.ncols(),
        });
    }
    if dim == 0 || dim > n {
        return Err(RfaeError::invalid(format!("cannot embed {n} points in {dim} dimensions")));
    }
    let half = T::of(0.5);
    let mut b = dist.mapv(|v| -half * v * v);
    let row_means = b.mean_axis(Axis(1)).expect("non-empty");
    let grand = row_means.mean().expect("non-empty");
    for i in 0..n {
        for j in 0..n {
            b[[i, j]] = b[[i, j]] - row_means[i] - row_means[j] + grand;
        }
    }
    // exact symmetry for the eigensolver
    let b = (&b + &b.t()) * half;
    let (vals, vecs) = top_eigenpairs(b.view(), dim, 3000, T::of(1e-10), seed)?;
    let mut x = vecs;
    for (k, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
        let s = vals[k].max(T::zero()).sqrt();
        col.mapv_inplace(|v| v * s);
    }
    Ok(x)
}

/// Raw stress `sum_{i<j} (|x_i - x_j| - delta_ij)^2`.
pub fn stress<T: Scalar>(x: ArrayView2<T>, delta: ArrayView2<T>) -> T {
    let n = x.nrows();
    let parts: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            let mut acc = T::zero();
            for j in (i + 1)..n {
                let d = crate::linalg::sq_dist(xi, x.row(j)).sqrt();
                let r = d - delta[[i, j]];
                acc += r * r;
            }
            acc
        })
        .collect();
    parts.into_iter().fold(T::zero(), |a, b| a + b)
}

/// Guttman transform with unit weights: `x_i <- (1/n) sum_j b_ij (x_i - x_j)`
/// where `b_ij = delta_ij / d_ij(X)` (zero when `d_ij = 0`).
fn guttman<T: Scalar>(x: ArrayView2<T>, delta: ArrayView2<T>) -> Array2<T> {
    let n = x.nrows();
    let inv_n = T::one() / T::of_usize(n);
    let mut out = Array2::zeros(x.raw_dim());
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let xi = x.row(i);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let xj = x.row(j);
                let d = crate::linalg::sq_dist(xi, xj).sqrt();
                if d > T::zero() {
                    let b = delta[[i, j]] / d;
                    for k in 0..row.len() {
                        row[k] += b * (xi[k] - xj[k]);
                    }
                }
            }
            row.mapv_inplace(|v| v * inv_n);
        });
    out
}

/// Result of a SMACOF run.
#[derive(Debug, Clone)]
pub struct SmacofResult<T> {
    pub coords: Array2<T>,
    /// Stress of the initial configuration followed by one entry per iteration.
    pub stress_trace: Vec<T>,
}

/// Metric MDS by SMACOF from an initial configuration. Stops when the
/// relative stress decrease drops below `tol` or after `max_iter` updates.
pub fn smacof<T: Scalar>(
    delta: ArrayView2<T>,
    init: Array2<T>,
    max_iter: usize,
    tol: T,
) -> Result<SmacofResult<T>> {
    let n = delta.nrows();
    if delta.ncols() != n || init.nrows() != n {
        return Err(RfaeError::DimensionMismatch {
            expected: n,
            found: init.nrows(),
        });
    }
    let mut x = init;
    let mut sigma = stress(x.view(), delta);
    let mut stress_trace = vec![sigma];
    for _ in 0..max_iter {
        if sigma == T::zero() {
            break;
        }
        let next = guttman(x.view(), delta);
        let next_sigma = stress(next.view(), delta);
        stress_trace.push(next_sigma);
        let rel = (sigma - next_sigma) / sigma;
        x = next;
        sigma = next_sigma;
        if rel < tol {
            break;
        }
    }
    Ok(SmacofResult {
        coords: x,
        stress_trace,
    })
}

/// Column means of a configuration, subtracted in place.
pub fn center<T: Scalar>(x: &mut Array2<T>) {
    if x.nrows() == 0 {
        return;
    }
    let mean: Array1<T> = x.mean_axis(Axis(0)).expect("non-empty");
    for mut row in x.outer_iter_mut() {
        row -= &mean;
    }
}
