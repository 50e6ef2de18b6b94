//! Brute-force k-nearest-neighbour classification from distance matrices.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{RfaeError, Result};
use crate::linalg::pairwise_dists;

/// Majority vote among the `k` nearest training points (distance ties go to
/// the lower training index). Vote ties go to the class with the smaller
/// summed distance, then to the lower class index.
pub fn knn_predict(d: ArrayView2<f64>, y_train: &[usize], n_classes: usize, k: usize) -> Result<Vec<usize>> {
    let n_train = d.ncols();
    if y_train.len() != n_train {
        return Err(RfaeError::RowCountMismatch {
            expected: n_train,
            found: y_train.len(),
        });
    }
    if k == 0 || k > n_train {
        return Err(RfaeError::invalid(format!("k = {k} must lie in 1..={n_train}")));
    }
    if let Some(&bad) = y_train.iter().find(|&&c| c >= n_classes) {
        return Err(RfaeError::invalid(format!("label {bad} out of range for {n_classes} classes")));
    }
    Ok(d.axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| {
            let cmp = |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
            let mut idx: Vec<usize> = (0..n_train).collect();
            if k < n_train {
                idx.select_nth_unstable_by(k - 1, cmp);
            }
            let mut votes = vec![0usize; n_classes];
            let mut dist = vec![0.0f64; n_classes];
            for &j in &idx[..k] {
                votes[y_train[j]] += 1;
                dist[y_train[j]] += row[j];
            }
            (0..n_classes)
                .filter(|&c| votes[c] > 0)
                .min_by(|&a, &b| {
                    votes[b]
                        .cmp(&votes[a])
                        .then(dist[a].total_cmp(&dist[b]))
                        .then(a.cmp(&b))
                })
                .expect("k >= 1")
        })
        .collect())
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "prediction length");
    if pred.is_empty() {
        return f64::NAN;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64
}

/// A classifier over raw feature rows.
pub trait Classifier: Sync {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>>;
}

/// k-NN over Euclidean distances to stored training rows.
#[derive(Debug, Clone)]
pub struct KnnClassifier {
    pub x_train: Array2<f64>,
    pub y_train: Vec<usize>,
    pub n_classes: usize,
    pub k: usize,
}

impl KnnClassifier {
    /// `k` defaults to `ceil(sqrt(N_train))`.
    pub fn fit(x_train: ArrayView2<f64>, y_train: &[usize], n_classes: usize, k: Option<usize>) -> Result<Self> {
        let n = x_train.nrows();
        if y_train.len() != n {
            return Err(RfaeError::RowCountMismatch {
                expected: n,
                found: y_train.len(),
            });
        }
        let k = k.unwrap_or_else(|| (n as f64).sqrt().ceil() as usize);
        if k == 0 || k > n {
            return Err(RfaeError::invalid(format!("k = {k} must lie in 1..={n}")));
        }
        Ok(KnnClassifier {
            x_train: x_train.to_owned(),
            y_train: y_train.to_vec(),
            n_classes,
            k,
        })
    }
}

impl Classifier for KnnClassifier {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        if x.ncols() != self.x_train.ncols() {
            return Err(RfaeError::DimensionMismatch {
                expected: self.x_train.ncols(),
                found: x.ncols(),
            });
        }
        let d = pairwise_dists(x, self.x_train.view());
        knn_predict(d.view(), &self.y_train, self.n_classes, self.k)
    }
}

/// `k = 5, 15, 25, ...` up to `floor(sqrt(n_train))`, or `k = 5` alone when
/// the square root is smaller (capped at `n_train`).
pub fn knn_k_values(n_train: usize) -> Vec<usize> {
    let top = (n_train as f64).sqrt().floor() as usize;
    if top < 5 {
        return vec![5.min(n_train).max(1)];
    }
    (5..=top).step_by(10).collect()
}

/// Mean test accuracy over [`knn_k_values`] given test-train distances.
pub fn knn_accuracy_curve(d: ArrayView2<f64>, y_train: &[usize], y_test: &[usize], n_classes: usize) -> Result<f64> {
    if d.nrows() != y_test.len() {
        return Err(RfaeError::RowCountMismatch {
            expected: d.nrows(),
            found: y_test.len(),
        });
    }
    let ks = knn_k_values(d.ncols());
    let mut acc = 0.0;
    for &k in &ks {
        acc += accuracy(&knn_predict(d, y_train, n_classes, k)?, y_test);
    }
    Ok(acc / ks.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn nearest_neighbour_and_tie_rule() {
        let d = array![[0.5, 0.2, 0.9], [0.3, 0.4, 0.1]];
        assert_eq!(knn_predict(d.view(), &[0, 1, 2], 3, 1).unwrap(), vec![1, 2]);
        // one vote each at k = 2; class 1 is closer in total
        assert_eq!(knn_predict(array![[0.5, 0.2, 0.9]].view(), &[0, 1, 0], 2, 2).unwrap(), vec![1]);
        // equal sums fall to the lower class
        assert_eq!(knn_predict(array![[0.3, 0.3]].view(), &[1, 0], 2, 2).unwrap(), vec![0]);
    }

    #[test]
    fn full_k_predicts_majority() {
        let d = array![[0.1, 0.2, 5.0, 6.0, 7.0], [9.0, 8.0, 0.1, 0.2, 0.3]];
        assert_eq!(knn_predict(d.view(), &[0, 0, 1, 1, 1], 2, 5).unwrap(), vec![1, 1]);
        assert!(knn_predict(d.view(), &[0, 0, 1, 1, 1], 2, 6).is_err());
    }

    #[test]
    fn k_grid() {
        assert_eq!(knn_k_values(1120), vec![5, 15, 25]);
        assert_eq!(knn_k_values(200), vec![5]);
        assert_eq!(knn_k_values(3), vec![3]);
    }
}
