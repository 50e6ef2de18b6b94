//! RF-GAP proximities with in-bag self-similarity, symmetrization and the
//! prototype-restricted transition probabilities.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use super::Forest;
use crate::error::{RfaeError, Result};

/// Index space of a transition-probability row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSpace {
    AllTrain,
    Prototypes,
}

/// Non-negative row summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityRow {
    pub values: Array1<f64>,
    pub space: TargetSpace,
}

impl Forest {
    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n_train {
            return Err(RfaeError::invalid(format!(
                "training index {i} out of range for {} points",
                self.n_train
            )));
        }
        Ok(())
    }

    /// Cross proximity `p(x_i, x_j)` averaged over the trees where `i` is OOB.
    pub fn rfgap_cross(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(RfaeError::invalid("cross proximity needs i != j; use rfgap_self"));
        }
        let oob = &self.oob_trees[i];
        if oob.is_empty() {
            return Err(RfaeError::NoOobTrees(i));
        }
        let mut acc = 0.0;
        for &t in oob {
            let tree = &self.trees[t as usize];
            let leaf = tree.leaf_of_train[i];
            if tree.leaf_of_train[j] == leaf && tree.inbag_counts[j] > 0 {
                acc += f64::from(tree.inbag_counts[j]) / f64::from(tree.leaf_mass[leaf as usize]);
            }
        }
        Ok(acc / oob.len() as f64)
    }

    /// Self-similarity of `i` averaged over the trees where `i` is in-bag.
    pub fn rfgap_self(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        let inbag = &self.inbag_trees[i];
        if inbag.is_empty() {
            return Err(RfaeError::NeverInBag(i));
        }
        let mut acc = 0.0;
        for &t in inbag {
            let tree = &self.trees[t as usize];
            let leaf = tree.leaf_of_train[i] as usize;
            acc += f64::from(tree.inbag_counts[i]) / f64::from(tree.leaf_mass[leaf]);
        }
        Ok(acc / inbag.len() as f64)
    }

    /// Raw proximity row of training point `i`: cross terms off the diagonal,
    /// self-similarity on it.
    pub fn rfgap_row(&self, i: usize) -> Result<Array1<f64>> {
        self.check_index(i)?;
        let oob = &self.oob_trees[i];
        if oob.is_empty() {
            return Err(RfaeError::NoOobTrees(i));
        }
        let mut row = Array1::zeros(self.n_train);
        for &t in oob {
            let tree = &self.trees[t as usize];
            let leaf = tree.leaf_of_train[i] as usize;
            let mass = f64::from(tree.leaf_mass[leaf]);
            for &j in &tree.leaf_inbag[leaf] {
                row[j as usize] += f64::from(tree.inbag_counts[j as usize]) / mass;
            }
        }
        let s = oob.len() as f64;
        row.mapv_inplace(|v| v / s);
        row[i] = self.rfgap_self(i)?;
        Ok(row)
    }

    /// Full `N x N` raw proximity matrix, rows computed in parallel.
    pub fn rfgap_matrix(&self) -> Result<Array2<f64>> {
        let rows: Vec<Array1<f64>> = (0..self.n_train)
            .into_par_iter()
            .map(|i| self.rfgap_row(i))
            .collect::<Result<_>>()?;
        let mut m = Array2::zeros((self.n_train, self.n_train));
        for (i, r) in rows.into_iter().enumerate() {
            m.row_mut(i).assign(&r);
        }
        Ok(m)
    }

    /// Proximities of an unseen point to every training point; the point is
    /// out-of-bag for all trees. Each tree is traversed once.
    pub fn rfgap_oos(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.n_features {
            return Err(RfaeError::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let mut row = Array1::zeros(self.n_train);
        for tree in &self.trees {
            let leaf = tree.route(x);
            let mass = f64::from(tree.leaf_mass[leaf]);
            for &j in &tree.leaf_inbag[leaf] {
                row[j as usize] += f64::from(tree.inbag_counts[j as usize]) / mass;
            }
        }
        let t = self.n_trees() as f64;
        row.mapv_inplace(|v| v / t);
        Ok(row)
    }

    /// `rfgap_oos` for every row of `x`.
    pub fn rfgap_oos_matrix(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features {
            return Err(RfaeError::DimensionMismatch {
                expected: self.n_features,
                found: x.ncols(),
            });
        }
        let mut out = Array2::zeros((x.nrows(), self.n_train));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(x.axis_iter(Axis(0)))
            .try_for_each(|(mut dst, src)| -> Result<()> {
                dst.assign(&self.rfgap_oos(src)?);
                Ok(())
            })?;
        Ok(out)
    }
}

/// `p'(i, j) = (P[i, j] + P[j, i]) / 2`. Exactly symmetric because IEEE
/// addition commutes.
pub fn symmetrize(p: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(RfaeError::DimensionMismatch {
            expected: n,
            found: p.ncols(),
        });
    }
    Ok(Array2::from_shape_fn((n, n), |(i, j)| (p[[i, j]] + p[[j, i]]) / 2.0))
}

/// Symmetrizes, then rescales every row to sum to one.
pub fn symmetrize_and_normalize(p: ArrayView2<f64>) -> Result<Array2<f64>> {
    if let Some(v) = p.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(RfaeError::invalid(format!(
            "proximities must be finite and non-negative, found {v}"
        )));
    }
    let mut out = symmetrize(p)?;
    for (i, mut row) in out.outer_iter_mut().enumerate() {
        let s: f64 = row.sum();
        if !(s > 0.0) {
            return Err(RfaeError::IsolatedPoint(i));
        }
        row.mapv_inplace(|v| v / s);
    }
    Ok(out)
}

/// Restricts a proximity row to the prototype columns and renormalizes.
pub fn prototype_probabilities(row: ArrayView1<f64>, medoids: &[usize]) -> Result<ProximityRow> {
    let mut values = Array1::zeros(medoids.len());
    for (k, &m) in medoids.iter().enumerate() {
        if m >= row.len() {
            return Err(RfaeError::invalid(format!(
                "prototype index {m} out of range for row of length {}",
                row.len()
            )));
        }
        values[k] = row[m];
    }
    let mass = values.sum();
    if !(mass > 0.0) {
        return Err(RfaeError::DisconnectedFromPrototypes);
    }
    values.mapv_inplace(|v| v / mass);
    Ok(ProximityRow {
        values,
        space: TargetSpace::Prototypes,
    })
}
