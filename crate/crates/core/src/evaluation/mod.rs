//! Out-of-sample embedding evaluation: structure-preservation scores,
//! perturbation-based feature importances, their Kendall alignment (SIA) and
//! k-NN accuracy in the embedding.

pub mod importance;
pub mod knn;
pub mod metrics;
pub mod perturbation;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use importance::{classification_importances, kendall_tau, structural_importances};
pub use knn::{accuracy, knn_accuracy_curve, knn_k_values, knn_predict, Classifier, KnnClassifier};
pub use metrics::{
    local_k_values, pearson_score, qnx, spearman_score, trustworthiness, RowRanking, ScoreContext, ScoreKind,
};
pub use perturbation::{correlation_matrix, perturb_per_feature, PerturbationSet, Perturber};

use crate::error::{RfaeError, Result};
use crate::linalg::pairwise_dists;

/// One SIA value per structure-preservation score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiaScores {
    pub qnx: f64,
    pub trust: f64,
    pub spearman: f64,
    pub pearson: f64,
}

impl SiaScores {
    pub fn local(&self) -> f64 {
        (self.qnx + self.trust) / 2.0
    }

    pub fn global(&self) -> f64 {
        (self.spearman + self.pearson) / 2.0
    }
}

/// Everything produced by [`evaluate_embedding`].
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub sia: SiaScores,
    pub classification: Vec<f64>,
    /// Structural importances in [`ScoreKind::ALL`] order.
    pub structural: Vec<Vec<f64>>,
    pub baseline_accuracy: f64,
    pub knn_accuracy: f64,
}

/// Inputs of one evaluation: raw features and labels for both splits and the
/// embeddings of both splits.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationInput<'a> {
    pub x_train: ArrayView2<'a, f64>,
    pub y_train: &'a [usize],
    pub x_test: ArrayView2<'a, f64>,
    pub y_test: &'a [usize],
    pub n_classes: usize,
    pub z_train: ArrayView2<'a, f64>,
    pub z_test: ArrayView2<'a, f64>,
}

impl EvaluationInput<'_> {
    fn validate(&self) -> Result<()> {
        let checks = [
            (self.x_train.nrows(), self.y_train.len()),
            (self.x_test.nrows(), self.y_test.len()),
            (self.x_train.nrows(), self.z_train.nrows()),
            (self.x_test.nrows(), self.z_test.nrows()),
        ];
        for (expected, found) in checks {
            if expected != found {
                return Err(RfaeError::RowCountMismatch { expected, found });
            }
        }
        if self.x_train.ncols() != self.x_test.ncols() {
            return Err(RfaeError::DimensionMismatch {
                expected: self.x_train.ncols(),
                found: self.x_test.ncols(),
            });
        }
        if self.z_train.ncols() != self.z_test.ncols() {
            return Err(RfaeError::DimensionMismatch {
                expected: self.z_train.ncols(),
                found: self.z_test.ncols(),
            });
        }
        Ok(())
    }
}

/// SIA for all four scores with a k-NN baseline classifier
/// (`k = ceil(sqrt(N_train))`), plus the k-NN accuracy curve in the embedding.
pub fn evaluate_embedding(input: &EvaluationInput<'_>, seed: u64) -> Result<EvaluationReport> {
    input.validate()?;
    let classifier = KnnClassifier::fit(input.x_train, input.y_train, input.n_classes, None)?;
    evaluate_with(input, &classifier, seed)
}

pub fn evaluate_with<C: Classifier + ?Sized>(
    input: &EvaluationInput<'_>,
    classifier: &C,
    seed: u64,
) -> Result<EvaluationReport> {
    input.validate()?;
    let corr = correlation_matrix(input.x_train);
    let perturber = Perturber::new(input.x_test, corr.view(), seed)?;
    let baseline_accuracy = accuracy(&classifier.predict(input.x_test)?, input.y_test);
    let classification = classification_importances(classifier, input.x_test, input.y_test, &perturber)?;
    let d_emb = pairwise_dists(input.z_test, input.z_train);
    let structural = structural_importances(&ScoreKind::ALL, input.x_train, input.x_test, d_emb.view(), &perturber)?;
    let tau = |k: usize| kendall_tau(&classification, &structural[k]);
    let sia = SiaScores {
        qnx: tau(0)?,
        trust: tau(1)?,
        spearman: tau(2)?,
        pearson: tau(3)?,
    };
    let knn_accuracy = knn_accuracy_curve(d_emb.view(), input.y_train, input.y_test, input.n_classes)?;
    Ok(EvaluationReport {
        sia,
        classification,
        structural,
        baseline_accuracy,
        knn_accuracy,
    })
}
