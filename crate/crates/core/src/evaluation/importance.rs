//! Classification and structural feature importances and their rank alignment.

use ndarray::ArrayView2;
use rayon::prelude::*;

use super::knn::{accuracy, Classifier};
use super::metrics::{ScoreContext, ScoreKind};
use super::perturbation::Perturber;
use crate::error::{RfaeError, Result};
use crate::linalg::pairwise_dists;

/// `C_i = acc(X_test) - acc(X_test perturbed at feature i)`.
pub fn classification_importances<C: Classifier + ?Sized>(
    classifier: &C,
    x_test: ArrayView2<f64>,
    y_test: &[usize],
    perturber: &Perturber,
) -> Result<Vec<f64>> {
    let base = accuracy(&classifier.predict(x_test)?, y_test);
    (0..perturber.n_features())
        .into_par_iter()
        .map(|i| {
            let copy = perturber.copy(i);
            Ok(base - accuracy(&classifier.predict(copy.view())?, y_test))
        })
        .collect()
}

/// `S_i = s(D_test, D_emb) - s(D_test perturbed at feature i, D_emb)` for each
/// requested score, with the training rows and the embedding held fixed.
/// Returns one importance vector per score kind, in the order given.
pub fn structural_importances(
    kinds: &[ScoreKind],
    x_train: ArrayView2<f64>,
    x_test: ArrayView2<f64>,
    d_emb: ArrayView2<f64>,
    perturber: &Perturber,
) -> Result<Vec<Vec<f64>>> {
    let ctx = ScoreContext::new(d_emb);
    let base = ctx.scores(pairwise_dists(x_test, x_train).view(), kinds)?;
    let per_feature: Vec<Vec<f64>> = (0..perturber.n_features())
        .into_par_iter()
        .map(|i| {
            let copy = perturber.copy(i);
            let d = pairwise_dists(copy.view(), x_train);
            let s = ctx.scores(d.view(), kinds)?;
            Ok(base.iter().zip(&s).map(|(b, v)| b - v).collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..kinds.len())
        .map(|k| per_feature.iter().map(|row| row[k]).collect())
        .collect())
}

/// Kendall tau-b between two equally long vectors.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(RfaeError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(RfaeError::Degenerate("undefined tau: fewer than two values".into()));
    }
    let (mut concordant, mut discordant, mut ties_a, mut ties_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            let da = a[i].total_cmp(&a[j]) as i64;
            let db = b[i].total_cmp(&b[j]) as i64;
            match (da, db) {
                (0, 0) => {}
                (0, _) => ties_a += 1,
                (_, 0) => ties_b += 1,
                _ if da == db => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n_a = (concordant + discordant + ties_b) as f64;
    let n_b = (concordant + discordant + ties_a) as f64;
    if n_a == 0.0 || n_b == 0.0 {
        return Err(RfaeError::Degenerate("undefined tau: constant input".into()));
    }
    Ok(((concordant - discordant) as f64 / (n_a * n_b).sqrt()).clamp(-1.0, 1.0))
}
