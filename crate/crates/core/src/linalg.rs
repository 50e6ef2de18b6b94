//! Dense linear algebra used by MDS, the kernel extensions and the metrics.
//!
//! The symmetric eigensolver is Householder tridiagonalization followed by
//! implicit QL iteration (the EISPACK `tred2`/`tql2` pair).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{RfaeError, Result};
use crate::scalar::Scalar;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    /// Eigenvalues in ascending order.
    pub values: Array1<T>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Array2<T>,
}

/// Full eigen-decomposition of a symmetric matrix. Only the lower triangle
/// is trusted implicitly through symmetry; callers pass symmetric input.
pub fn symmetric_eigen<T: Scalar>(a: ArrayView2<T>) -> Result<SymmetricEigen<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(RfaeError::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Array1::zeros(0),
            vectors: Array2::zeros((0, 0)),
        });
    }
    let mut v: Vec<T> = a.iter().copied().collect();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(n, &mut v, &mut d, &mut e);
    // rows of `vt` are the columns of V, so QL rotations touch contiguous memory
    let mut vt = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            vt[j * n + i] = v[i * n + j];
        }
    }
    tql2(n, &mut vt, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| d[x].partial_cmp(&d[y]).expect("finite eigenvalues"));
    let values = Array1::from_iter(order.iter().map(|&k| d[k]));
    let mut vectors = Array2::zeros((n, n));
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            vectors[[i, col]] = vt[k * n + i];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

fn tred2<T: Scalar>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) {
    let idx = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
                v[idx(j, i)] = T::zero();
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = T::zero();
    }
    v[idx(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

/// QL iteration on the tridiagonal (d, e). `vt` holds eigenvectors as rows.
fn tql2<T: Scalar>(n: usize, vt: &mut [T], d: &mut [T], e: &mut [T]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let two = T::of(2.0);
    let eps = T::epsilon();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let max_iter = 60 * n.max(1);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(RfaeError::Degenerate(
                        "symmetric eigensolver did not converge".into(),
                    ));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = vt.split_at_mut((i + 1) * n);
                    let row_i = &mut lo[i * n..];
                    let row_next = &mut hi[..n];
                    for k in 0..n {
                        let h = row_next[k];
                        row_next[k] = s * row_i[k] + c * h;
                        row_i[k] = c * row_i[k] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    Ok(())
}

/// Solves `A X = B` by LU decomposition with partial pivoting.
///
/// Returns `None` when a pivot falls below `tol * max|A|`, i.e. the matrix is
/// numerically singular.
pub fn lu_solve<T: Scalar>(a: ArrayView2<T>, b: ArrayView2<T>, tol: T) -> Option<Array2<T>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "lu_solve needs a square matrix");
    assert_eq!(b.nrows(), n, "right-hand side rows must match");
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if n > 0 && scale == T::zero() {
        return None;
    }
    let mut lu = a.to_owned();
    let mut x = b.to_owned();
    for col in 0..n {
        let (piv, pmax) = (col..n)
            .map(|r| (r, lu[[r, col]].abs()))
            .fold((col, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= tol * scale {
            return None;
        }
        if piv != col {
            for j in 0..n {
                lu.swap([col, j], [piv, j]);
            }
            for j in 0..x.ncols() {
                x.swap([col, j], [piv, j]);
            }
        }
        let pivot = lu[[col, col]];
        for r in (col + 1)..n {
            let factor = lu[[r, col]] / pivot;
            if factor == T::zero() {
                continue;
            }
            lu[[r, col]] = factor;
            for j in (col + 1)..n {
                let u = lu[[col, j]];
                lu[[r, j]] -= factor * u;
            }
            for j in 0..x.ncols() {
                let u = x[[col, j]];
                x[[r, j]] -= factor * u;
            }
        }
    }
    for col in (0..n).rev() {
        let pivot = lu[[col, col]];
        for j in 0..x.ncols() {
            let mut acc = x[[col, j]];
            for k in (col + 1)..n {
                acc -= lu[[col, k]] * x[[k, j]];
            }
            x[[col, j]] = acc / pivot;
        }
    }
    Some(x)
}

/// Minimum-norm least-squares solution `A⁺ B`, built from the eigenvectors of
/// `AᵀA`. Singular values below `rel_tol * σ_max` are treated as zero.
pub fn pinv_solve<T: Scalar>(a: ArrayView2<T>, b: ArrayView2<T>, rel_tol: T) -> Result<Array2<T>> {
    let ata = a.t().dot(&a);
    let eig = symmetric_eigen(ata.view())?;
    let max_ev = eig.values.iter().fold(T::zero(), |m, v| m.max(*v));
    let cutoff = (rel_tol * max_ev.sqrt()).powi(2);
    let atb = a.t().dot(&b);
    let n = a.ncols();
    let mut x = Array2::zeros((n, b.ncols()));
    for (k, &ev) in eig.values.iter().enumerate() {
        if ev <= cutoff || ev <= T::zero() {
            continue;
        }
        let u = eig.vectors.column(k);
        // x += u (uᵀ Aᵀ B) / σ²
        let coeff = u.dot(&atb) / ev;
        for i in 0..n {
            for j in 0..b.ncols() {
                x[[i, j]] += u[i] * coeff[j];
            }
        }
    }
    Ok(x)
}

/// Orthonormalizes the columns of `m` in place (modified Gram-Schmidt, two passes).
fn orthonormalize<T: Scalar>(m: &mut Array2<T>) {
    let k = m.ncols();
    for _ in 0..2 {
        for j in 0..k {
            for p in 0..j {
                let proj = m.column(p).dot(&m.column(j));
                let (src, mut dst) = m.multi_slice_mut((ndarray::s![.., p], ndarray::s![.., j]));
                dst.scaled_add(-proj, &src);
            }
            let norm = m.column(j).dot(&m.column(j)).sqrt();
            if norm > T::zero() {
                m.column_mut(j).mapv_inplace(|v| v / norm);
            }
        }
    }
}

/// The `k` algebraically largest eigenpairs of a symmetric matrix by
/// orthogonal subspace iteration with Rayleigh-Ritz extraction.
/// Eigenvalues are returned in descending order.
pub fn top_eigenpairs<T: Scalar>(
    a: ArrayView2<T>,
    k: usize,
    max_iter: usize,
    tol: T,
    seed: u64,
) -> Result<(Array1<T>, Array2<T>)> {
    let n = a.nrows();
    if k > n {
        return Err(RfaeError::invalid(format!("requested {k} eigenpairs of a {n}x{n} matrix")));
    }
    if n <= 64 {
        let eig = symmetric_eigen(a)?;
        let vals = Array1::from_iter((0..k).map(|i| eig.values[n - 1 - i]));
        let vecs = Array2::from_shape_fn((n, k), |(r, c)| eig.vectors[[r, n - 1 - c]]);
        return Ok((vals, vecs));
    }
    let block = (k + 6).min(n);
    let mut rng = crate::rng::stream(seed, "subspace-iteration", 0);
    let normal = rand_distr::StandardNormal;
    let mut q = Array2::from_shape_fn((n, block), |_| {
        T::of(rand_distr::Distribution::<f64>::sample(&normal, &mut rng))
    });
    orthonormalize(&mut q);
    let mut prev = Array1::<T>::zeros(k);
    let mut ritz_vals = Array1::<T>::zeros(block);
    let mut ritz_vecs = q.clone();
    for iter in 0..max_iter {
        let z = a.dot(&q);
        let small = q.t().dot(&z);
        let small = (&small + &small.t()) * T::of(0.5);
        let eig = symmetric_eigen(small.view())?;
        // descending order
        let order: Vec<usize> = (0..block).rev().collect();
        ritz_vals = Array1::from_iter(order.iter().map(|&c| eig.values[c]));
        let rot = eig.vectors.select(Axis(1), &order);
        ritz_vecs = q.dot(&rot);
        let mut next = z.dot(&rot);
        orthonormalize(&mut next);
        q = next;
        let cur = ritz_vals.slice(ndarray::s![..k]).to_owned();
        let scale = cur.iter().fold(T::min_positive_value(), |m, v| m.max(v.abs()));
        let delta = (&cur - &prev).iter().fold(T::zero(), |m, v| m.max(v.abs()));
        prev = cur;
        if iter > 2 && delta <= tol * scale {
            break;
        }
    }
    let vals = ritz_vals.slice(ndarray::s![..k]).to_owned();
    let vecs = ritz_vecs.slice(ndarray::s![.., ..k]).to_owned();
    Ok((vals, vecs))
}

/// Squared Euclidean distances between the rows of `a` and the rows of `b`.
pub fn pairwise_sq_dists<T: Scalar>(a: ArrayView2<T>, b: ArrayView2<T>) -> Array2<T> {
    assert_eq!(a.ncols(), b.ncols(), "row dimensions must agree");
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(a.axis_iter(Axis(0)))
        .for_each(|(mut row, x)| {
            for (o, y) in row.iter_mut().zip(b.outer_iter()) {
                *o = sq_dist(x, y);
            }
        });
    out
}

/// Euclidean distances between the rows of `a` and the rows of `b`.
pub fn pairwise_dists<T: Scalar>(a: ArrayView2<T>, b: ArrayView2<T>) -> Array2<T> {
    pairwise_sq_dists(a, b).mapv(|v| v.sqrt())
}

#[inline]
pub fn sq_dist<T: Scalar>(x: ArrayView1<T>, y: ArrayView1<T>) -> T {
    x.iter()
        .zip(y.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .fold(T::zero(), |acc, v| acc + v)
}
