//! Correlation-aware feature perturbation: each feature and, with probability
//! `|corr|`, each correlated feature is resampled from a column-shuffled copy.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{RfaeError, Result};
use crate::rng;

/// Pearson correlations between columns. Constant columns correlate 0 with
/// every other column; the diagonal is 1.
pub fn correlation_matrix(x: ArrayView2<f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut centered = x.to_owned();
    let mut norms = vec![0.0; d];
    for (j, mut col) in centered.axis_iter_mut(Axis(1)).enumerate() {
        let mean = col.sum() / n.max(1) as f64;
        col.mapv_inplace(|v| v - mean);
        norms[j] = col.dot(&col).sqrt();
    }
    let gram = centered.t().dot(&centered);
    Array2::from_shape_fn((d, d), |(i, j)| {
        if i == j {
            1.0
        } else if norms[i] == 0.0 || norms[j] == 0.0 {
            0.0
        } else {
            (gram[[i, j]] / (norms[i] * norms[j])).clamp(-1.0, 1.0)
        }
    })
}

/// The shared shuffled copy and correlations from which every per-feature
/// perturbation is drawn.
#[derive(Debug, Clone)]
pub struct Perturber {
    original: Array2<f64>,
    shuffled: Array2<f64>,
    corr: Array2<f64>,
    seed: u64,
}

impl Perturber {
    pub fn new(x: ArrayView2<f64>, corr: ArrayView2<f64>, seed: u64) -> Result<Self> {
        let d = x.ncols();
        if corr.dim() != (d, d) {
            return Err(RfaeError::DimensionMismatch {
                expected: d,
                found: corr.nrows(),
            });
        }
        if corr.iter().any(|v| !v.is_finite() || v.abs() > 1.0 + 1e-12) {
            return Err(RfaeError::invalid("correlations must be finite and within [-1, 1]"));
        }
        let mut shuffled = x.to_owned();
        let mut rng = rng::stream(seed, "perturb-shuffle", 0);
        let mut perm: Vec<usize> = (0..x.nrows()).collect();
        for (j, mut col) in shuffled.axis_iter_mut(Axis(1)).enumerate() {
            perm.shuffle(&mut rng);
            for (r, &src) in perm.iter().enumerate() {
                col[r] = x[[src, j]];
            }
        }
        Ok(Perturber {
            original: x.to_owned(),
            shuffled,
            corr: corr.to_owned(),
            seed,
        })
    }

    pub fn n_features(&self) -> usize {
        self.original.ncols()
    }

    pub fn shuffled(&self) -> &Array2<f64> {
        &self.shuffled
    }

    /// Bernoulli replacement mask for feature `i`; column `j` is drawn with
    /// probability `|C[i, j]|`.
    pub fn mask(&self, i: usize) -> Array2<bool> {
        let (n, d) = self.original.dim();
        let mut rng = rng::stream(self.seed, "perturb-mask", i as u64);
        let mut m = Array2::from_elem((n, d), false);
        for r in 0..n {
            for j in 0..d {
                let p = if j == i { 1.0 } else { self.corr[[i, j]].abs().min(1.0) };
                // one draw per cell keeps the stream layout independent of C
                let u: f64 = rng.random();
                m[[r, j]] = u < p;
            }
        }
        m
    }

    /// Perturbed copy for feature `i`.
    pub fn copy(&self, i: usize) -> Array2<f64> {
        let m = self.mask(i);
        let mut out = self.original.clone();
        ndarray::Zip::from(&mut out)
            .and(&m)
            .and(&self.shuffled)
            .for_each(|o, &take, &s| {
                if take {
                    *o = s;
                }
            });
        out
    }
}

/// Every per-feature perturbed copy together with the correlations used.
#[derive(Debug, Clone)]
pub struct PerturbationSet {
    pub copies: Vec<Array2<f64>>,
    pub correlation: Array2<f64>,
}

pub fn perturb_per_feature(x_test: ArrayView2<f64>, corr: ArrayView2<f64>, seed: u64) -> Result<PerturbationSet> {
    let p = Perturber::new(x_test, corr, seed)?;
    Ok(PerturbationSet {
        copies: (0..p.n_features()).map(|i| p.copy(i)).collect(),
        correlation: corr.to_owned(),
    })
}
