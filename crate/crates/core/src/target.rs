//! Geometric target coordinates for the bottleneck: loaded from CSV, or
//! computed by a diffusion-potential embedder over the forest transition
//! matrix.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::read_table;
use crate::error::{RfaeError, Result};
use crate::linalg::pairwise_dists;
use crate::mds::{center, classical_mds, smacof};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetSource {
    File,
    Diffusion,
}

/// `N x d` target coordinates, row `i` aligned with training point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEmbedding<T> {
    pub coords: Array2<T>,
    pub source: TargetSource,
}

impl<T: Scalar> TargetEmbedding<T> {
    pub fn n_points(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    /// Centres the coordinates and rescales them to unit root-mean-square
    /// radius. Pairwise geometry is preserved up to one global scale.
    pub fn standardized(&self) -> Self {
        let mut coords = self.coords.clone();
        center(&mut coords);
        let n = coords.nrows().max(1);
        let ms = coords.iter().map(|v| *v * *v).fold(T::zero(), |a, b| a + b) / T::of_usize(n);
        let rms = ms.sqrt();
        if rms > T::zero() {
            coords.mapv_inplace(|v| v / rms);
        }
        TargetEmbedding {
            coords,
            source: self.source,
        }
    }

    pub fn cast<U: Scalar>(&self) -> TargetEmbedding<U> {
        TargetEmbedding {
            coords: self.coords.mapv(|v| U::of(v.as_f64())),
            source: self.source,
        }
    }
}

/// Loads target coordinates from a CSV with a header row and `d` numeric
/// columns; the row count must equal `expected_rows`.
pub fn load_embedding<T: Scalar>(path: impl AsRef<Path>, expected_rows: usize) -> Result<TargetEmbedding<T>> {
    let table = read_table(path, None)?;
    if table.features.nrows() != expected_rows {
        return Err(RfaeError::RowCountMismatch {
            expected: expected_rows,
            found: table.features.nrows(),
        });
    }
    if table.features.ncols() == 0 {
        return Err(RfaeError::invalid("target embedding file has no columns"));
    }
    Ok(TargetEmbedding {
        coords: table.features.mapv(T::of),
        source: TargetSource::File,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    /// Diffusion steps `t`.
    pub t: usize,
    /// Guard inside the potential logarithm.
    pub eps: f64,
    pub dim: usize,
    pub mds_iters: usize,
    pub mds_tol: f64,
    pub seed: u64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        DiffusionParams {
            t: 16,
            eps: 1e-12,
            dim: 2,
            mds_iters: 500,
            mds_tol: 1e-6,
            seed: 0,
        }
    }
}

/// Diffusion embedding plus its intermediate products.
#[derive(Debug, Clone)]
pub struct DiffusionOutput<T> {
    pub embedding: TargetEmbedding<T>,
    pub potential_distances: Array2<T>,
    pub stress_trace: Vec<T>,
}

/// `P^t` by binary exponentiation.
pub fn matrix_power<T: Scalar>(p: ArrayView2<T>, t: usize) -> Array2<T> {
    let n = p.nrows();
    let mut result: Option<Array2<T>> = None;
    let mut base = p.to_owned();
    let mut e = t;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => r.dot(&base),
            });
        }
        e >>= 1;
        if e > 0 {
            base = base.dot(&base);
        }
    }
    result.unwrap_or_else(|| Array2::eye(n))
}

/// Pairwise Euclidean distances between rows of `-log(P^t + eps)`.
pub fn potential_distances<T: Scalar>(p: ArrayView2<T>, t: usize, eps: T) -> Array2<T> {
    let pt = matrix_power(p, t);
    let potential = pt.mapv(|v| -(v.max(T::zero()) + eps).ln());
    pairwise_dists(potential.view(), potential.view())
}

/// Embeds a row-stochastic transition matrix: diffusion for `t` steps,
/// log potentials, then metric MDS initialized by classical MDS.
pub fn diffusion_embed<T: Scalar>(p: ArrayView2<T>, params: &DiffusionParams) -> Result<DiffusionOutput<T>> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(RfaeError::DimensionMismatch {
            expected: n,
            found: p.ncols(),
        });
    }
    if params.t < 1 {
        return Err(RfaeError::invalid("diffusion time t must be at least 1"));
    }
    if !(params.eps > 0.0) {
        return Err(RfaeError::invalid("potential guard eps must be positive"));
    }
    for (i, row) in p.outer_iter().enumerate() {
        let s = row.sum().as_f64();
        if (s - 1.0).abs() > 1e-6 || row.iter().any(|v| *v < T::zero()) {
            return Err(RfaeError::invalid(format!(
                "transition matrix row {i} is not a probability vector (sum {s})"
            )));
        }
    }
    let dist = potential_distances(p, params.t, T::of(params.eps));
    let init = classical_mds(dist.view(), params.dim, params.seed)?;
    let fit = smacof(dist.view(), init, params.mds_iters, T::of(params.mds_tol))?;
    let mut coords = fit.coords;
    center(&mut coords);
    Ok(DiffusionOutput {
        embedding: TargetEmbedding {
            coords,
            source: TargetSource::Diffusion,
        },
        potential_distances: dist,
        stress_trace: fit.stress_trace,
    })
}
