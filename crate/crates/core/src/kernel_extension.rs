//! Linear kernel extensions `k -> k W` for embedding new points from their
//! similarity vectors against the training set.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{RfaeError, Result};
use crate::linalg::{lu_solve, pinv_solve, symmetric_eigen};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtensionKind {
    LeastSquares,
    Nystrom,
    LinearReconstruction,
}

impl std::fmt::Display for ExtensionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExtensionKind::LeastSquares => "least-squares",
            ExtensionKind::Nystrom => "nystrom",
            ExtensionKind::LinearReconstruction => "linear-reconstruction",
        })
    }
}

/// Which eigenpairs the Nyström formula keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EigenSelection {
    #[default]
    LargestMagnitude,
    Largest,
    Smallest,
}

/// Ridge term for [`fit_least_squares`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Ridge {
    /// `1e-8 * trace(K) / N`.
    #[default]
    Auto,
    Value(f64),
}

/// Below this |eigenvalue| the Nyström formula is rejected.
pub const NEAR_SINGULAR: f64 = 1e-12;

/// Projection matrix `W` (`N x d`) of a fitted extension.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearExtension<T> {
    pub w: Array2<T>,
    pub kind: ExtensionKind,
}

fn check_finite<T: Scalar>(m: ArrayView2<T>) -> Result<()> {
    match m.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((row, column), _)) => Err(RfaeError::NonFinite { row, column }),
        None => Ok(()),
    }
}

/// Least-squares projection `W = (K + ridge I)^+ Y`. A singular system with
/// zero ridge falls back to the minimum-norm pseudo-inverse solution.
pub fn fit_least_squares<T: Scalar>(k: ArrayView2<T>, y: ArrayView2<T>, ridge: Ridge) -> Result<LinearExtension<T>> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(RfaeError::DimensionMismatch {
            expected: n,
            found: k.ncols(),
        });
    }
    if y.nrows() != n {
        return Err(RfaeError::RowCountMismatch {
            expected: n,
            found: y.nrows(),
        });
    }
    check_finite(k)?;
    check_finite(y)?;
    let r = match ridge {
        Ridge::Auto => T::of(1e-8) * k.diag().sum() / T::of_usize(n.max(1)),
        Ridge::Value(v) if v >= 0.0 => T::of(v),
        Ridge::Value(v) => return Err(RfaeError::invalid(format!("ridge must be non-negative, got {v}"))),
    };
    let mut a = k.to_owned();
    for i in 0..n {
        a[[i, i]] += r;
    }
    // pivots at rounding-noise level mean a singular system; the pseudo-inverse
    // resolves singular values only down to about sqrt(eps) of the largest
    let pivot_tol = T::of(1e-9).max(T::epsilon() * T::of(100.0));
    let w = match lu_solve(a.view(), y, pivot_tol) {
        Some(w) => w,
        None => pinv_solve(a.view(), y, T::of(1e-7).max(T::epsilon().sqrt() * T::of(10.0)))?,
    };
    Ok(LinearExtension {
        w,
        kind: ExtensionKind::LeastSquares,
    })
}

/// Nyström formula `W = U Λ^{-1}` over `d` selected eigenpairs of `K`.
/// A non-symmetric `K` is replaced by `(K + K^T) / 2`.
pub fn fit_nystrom<T: Scalar>(k: ArrayView2<T>, d: usize, select: EigenSelection) -> Result<LinearExtension<T>> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(RfaeError::DimensionMismatch {
            expected: n,
            found: k.ncols(),
        });
    }
    if d == 0 || d > n {
        return Err(RfaeError::invalid(format!("cannot select {d} eigenpairs of a {n}x{n} kernel")));
    }
    check_finite(k)?;
    let asym = k.iter().zip(k.t().iter()).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
    let scale = k.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let sym = if asym > T::epsilon() * scale {
        log::warn!("Nyström kernel is not symmetric (max asymmetry {asym}); using (K + K^T)/2");
        (&k + &k.t()) * T::of(0.5)
    } else {
        k.to_owned()
    };
    let eig = symmetric_eigen(sym.view())?;
    // values are ascending
    let mut order: Vec<usize> = (0..n).collect();
    match select {
        EigenSelection::Largest => order.reverse(),
        EigenSelection::Smallest => {}
        EigenSelection::LargestMagnitude => {
            order.sort_by(|&a, &b| {
                eig.values[b]
                    .abs()
                    .partial_cmp(&eig.values[a].abs())
                    .expect("finite eigenvalues")
                    .then(a.cmp(&b))
            });
        }
    }
    order.truncate(d);
    let mut w = Array2::zeros((n, d));
    for (c, &idx) in order.iter().enumerate() {
        let lam = eig.values[idx];
        if lam.abs() < T::of(NEAR_SINGULAR) {
            return Err(RfaeError::NearSingularSpectrum(lam.as_f64()));
        }
        let col = eig.vectors.column(idx).mapv(|v| v / lam);
        w.column_mut(c).assign(&col);
    }
    Ok(LinearExtension {
        w,
        kind: ExtensionKind::Nystrom,
    })
}

/// `W = Y`: each new point is the similarity-weighted combination of the
/// training embeddings.
pub fn fit_linear_reconstruction<T: Scalar>(y: ArrayView2<T>) -> LinearExtension<T> {
    LinearExtension {
        w: y.to_owned(),
        kind: ExtensionKind::LinearReconstruction,
    }
}

impl<T: Scalar> LinearExtension<T> {
    pub fn n_train(&self) -> usize {
        self.w.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    /// `k W` for one similarity vector.
    pub fn apply(&self, k: ArrayView1<T>) -> Result<Array1<T>> {
        if k.len() != self.n_train() {
            return Err(RfaeError::DimensionMismatch {
                expected: self.n_train(),
                found: k.len(),
            });
        }
        Ok(k.dot(&self.w))
    }

    /// `K W` for a batch of similarity rows.
    pub fn apply_rows(&self, k: ArrayView2<T>) -> Result<Array2<T>> {
        if k.ncols() != self.n_train() {
            return Err(RfaeError::DimensionMismatch {
                expected: self.n_train(),
                found: k.ncols(),
            });
        }
        if k.nrows() == 0 {
            return Ok(Array2::zeros((0, self.dim())));
        }
        // row by row so each output row is independent of the batch
        let mut out = Array2::zeros((k.nrows(), self.dim()));
        for (mut o, row) in out.axis_iter_mut(Axis(0)).zip(k.outer_iter()) {
            o.assign(&row.dot(&self.w));
        }
        Ok(out)
    }
}
