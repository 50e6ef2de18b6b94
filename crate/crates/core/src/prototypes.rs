//! Class-wise k-medoids prototype selection on forest dissimilarities.
//!
//! Each class is clustered independently with PAM: greedy BUILD followed by
//! best-improvement SWAP until no single medoid exchange lowers the total
//! deviation.

use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RfaeError, Result};

/// Symmetric dissimilarities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix {
    pub values: Array2<f64>,
}

/// `d(i, j) = (M - p'(i, j)) / M` with `M` the largest entry of `p'`.
pub fn build_dissimilarity(p_prime: ArrayView2<f64>) -> Result<DissimilarityMatrix> {
    let n = p_prime.nrows();
    if p_prime.ncols() != n {
        return Err(RfaeError::DimensionMismatch {
            expected: n,
            found: p_prime.ncols(),
        });
    }
    let max = p_prime.iter().fold(0.0f64, |m, &v| m.max(v));
    if !(max > 0.0) {
        return Err(RfaeError::Degenerate("all-zero proximity matrix".into()));
    }
    let values = p_prime.mapv(|v| (max - v) / max);
    Ok(DissimilarityMatrix { values })
}

/// How many prototypes to select: an absolute count or a fraction of the
/// training size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PrototypeCount {
    Absolute(usize),
    Fraction(f64),
}

impl Default for PrototypeCount {
    fn default() -> Self {
        PrototypeCount::Fraction(0.1)
    }
}

impl PrototypeCount {
    pub fn resolve(&self, n_train: usize) -> usize {
        match *self {
            PrototypeCount::Absolute(k) => k,
            PrototypeCount::Fraction(f) => ((n_train as f64) * f).round() as usize,
        }
    }
}

impl FromStr for PrototypeCount {
    type Err = RfaeError;

    /// Integers are absolute counts; values in `(0, 1)` are fractions.
    fn from_str(s: &str) -> Result<Self> {
        if let Ok(k) = s.parse::<usize>() {
            return Ok(PrototypeCount::Absolute(k));
        }
        match s.parse::<f64>() {
            Ok(f) if f > 0.0 && f < 1.0 => Ok(PrototypeCount::Fraction(f)),
            _ => Err(RfaeError::invalid(format!(
                "prototype count must be a positive integer or a fraction in (0, 1), got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MedoidSet {
    /// All medoid indices, sorted ascending.
    pub indices: Vec<usize>,
    /// Medoids of each class, sorted ascending.
    pub per_class: Vec<Vec<usize>>,
}

/// Splits `n_prototypes` across classes: `floor(N*/q)` each, the remainder to
/// the largest classes, then any class too small for its share is clamped
/// and its deficit handed to the largest classes with spare members.
pub fn allocate_per_class(class_sizes: &[usize], n_prototypes: usize) -> Result<Vec<usize>> {
    let q = class_sizes.len();
    if n_prototypes < q {
        return Err(RfaeError::TooFewPrototypes {
            requested: n_prototypes,
            classes: q,
        });
    }
    let total: usize = class_sizes.iter().sum();
    if n_prototypes > total {
        return Err(RfaeError::invalid(format!(
            "{n_prototypes} prototypes requested from {total} training points"
        )));
    }
    // classes by decreasing size, ties by index
    let mut by_size: Vec<usize> = (0..q).collect();
    by_size.sort_by(|&a, &b| class_sizes[b].cmp(&class_sizes[a]).then(a.cmp(&b)));
    let mut k = vec![n_prototypes / q; q];
    for &c in by_size.iter().take(n_prototypes % q) {
        k[c] += 1;
    }
    let mut deficit = 0;
    for c in 0..q {
        if k[c] > class_sizes[c] {
            deficit += k[c] - class_sizes[c];
            k[c] = class_sizes[c];
        }
    }
    while deficit > 0 {
        let mut moved = false;
        for &c in &by_size {
            if deficit > 0 && k[c] < class_sizes[c] {
                k[c] += 1;
                deficit -= 1;
                moved = true;
            }
        }
        debug_assert!(moved, "capacity checked above");
    }
    Ok(k)
}

/// Sum over points of the dissimilarity to the nearest medoid.
pub fn total_deviation(d: ArrayView2<f64>, medoids: &[usize]) -> f64 {
    (0..d.nrows())
        .map(|i| {
            medoids
                .iter()
                .map(|&m| d[[i, m]])
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Outcome of PAM on one dissimilarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PamResult {
    /// Medoids as local indices into the matrix, sorted.
    pub medoids: Vec<usize>,
    pub loss: f64,
    /// Total deviation after BUILD and after each applied swap.
    pub loss_trace: Vec<f64>,
}

fn nearest_two(d: ArrayView2<f64>, medoids: &[usize], i: usize) -> (usize, f64, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (slot, &m) in medoids.iter().enumerate() {
        let v = d[[i, m]];
        if v < best.1 {
            second = best.1;
            best = (slot, v);
        } else if v < second {
            second = v;
        }
    }
    (best.0, best.1, second)
}

/// PAM with greedy BUILD and best-improvement SWAP.
pub fn pam(d: ArrayView2<f64>, k: usize, max_swaps: usize) -> Result<PamResult> {
    let n = d.nrows();
    if k == 0 || k > n {
        return Err(RfaeError::invalid(format!("cannot place {k} medoids among {n} points")));
    }
    if k == n {
        let medoids: Vec<usize> = (0..n).collect();
        let loss = total_deviation(d, &medoids);
        return Ok(PamResult {
            medoids,
            loss,
            loss_trace: vec![loss],
        });
    }
    // BUILD
    let mut medoids = Vec::with_capacity(k);
    let first = (0..n)
        .map(|c| (c, d.row(c).sum()))
        .fold((0, f64::INFINITY), |b, cur| if cur.1 < b.1 { cur } else { b })
        .0;
    medoids.push(first);
    let mut nearest: Vec<f64> = (0..n).map(|i| d[[i, first]]).collect();
    while medoids.len() < k {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for c in 0..n {
            if medoids.contains(&c) {
                continue;
            }
            let gain: f64 = (0..n).map(|i| (nearest[i] - d[[i, c]]).max(0.0)).sum();
            if gain > best.1 {
                best = (c, gain);
            }
        }
        let c = best.0;
        medoids.push(c);
        for i in 0..n {
            nearest[i] = nearest[i].min(d[[i, c]]);
        }
    }
    let mut loss = total_deviation(d, &medoids);
    let mut loss_trace = vec![loss];
    // SWAP
    let tol = 1e-12 * loss.abs().max(1.0);
    for _ in 0..max_swaps {
        let cache: Vec<(usize, f64, f64)> = (0..n).map(|i| nearest_two(d, &medoids, i)).collect();
        let mut best = (0usize, 0usize, 0.0f64);
        for o in 0..n {
            if medoids.contains(&o) {
                continue;
            }
            for slot in 0..k {
                // change in loss if medoids[slot] is replaced by o
                let mut delta = 0.0;
                for (i, &(near_slot, dn, ds)) in cache.iter().enumerate() {
                    let dio = d[[i, o]];
                    delta += if near_slot == slot {
                        dio.min(ds) - dn
                    } else {
                        (dio - dn).min(0.0)
                    };
                }
                if delta < best.2 {
                    best = (slot, o, delta);
                }
            }
        }
        if best.2 >= -tol {
            break;
        }
        medoids[best.0] = best.1;
        let new_loss = total_deviation(d, &medoids);
        debug_assert!(new_loss <= loss + tol);
        loss = new_loss;
        loss_trace.push(loss);
    }
    medoids.sort_unstable();
    Ok(PamResult {
        medoids,
        loss,
        loss_trace,
    })
}

/// Selects `n_prototypes` medoids, class by class.
pub fn kmedoids_classwise(
    d: &DissimilarityMatrix,
    labels: &[usize],
    n_classes: usize,
    n_prototypes: usize,
) -> Result<MedoidSet> {
    let n = d.values.nrows();
    if labels.len() != n {
        return Err(RfaeError::RowCountMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let members: Vec<Vec<usize>> = (0..n_classes)
        .map(|c| (0..n).filter(|&i| labels[i] == c).collect())
        .collect();
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let k = allocate_per_class(&sizes, n_prototypes)?;
    let per_class: Vec<Vec<usize>> = members
        .par_iter()
        .zip(k.par_iter())
        .map(|(idx, &kc)| -> Result<Vec<usize>> {
            if kc == 0 {
                return Ok(Vec::new());
            }
            let sub = d.values.select(ndarray::Axis(0), idx).select(ndarray::Axis(1), idx);
            let res = pam(sub.view(), kc, 10_000)?;
            let mut chosen: Vec<usize> = res.medoids.iter().map(|&m| idx[m]).collect();
            chosen.sort_unstable();
            Ok(chosen)
        })
        .collect::<Result<_>>()?;
    let mut indices: Vec<usize> = per_class.iter().flatten().copied().collect();
    indices.sort_unstable();
    Ok(MedoidSet { indices, per_class })
}
