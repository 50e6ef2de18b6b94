//! Random-forest classifier with per-tree bootstrap multiplicities, plus the
//! RF-GAP proximity machinery built on top of it.

mod proximity;
mod tree;

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RfaeError, Result};
use crate::rng;

pub use proximity::{
    prototype_probabilities, symmetrize, symmetrize_and_normalize, ProximityRow, TargetSpace,
};
pub use tree::{GrowParams, Tree, TreeNode};

/// Forest hyperparameters. `mtry = None` means `ceil(sqrt(D))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 500,
            mtry: None,
            min_leaf: 1,
            max_depth: None,
            seed: 0,
        }
    }
}

/// Bootstrap redraws allowed before giving up on full OOB/in-bag coverage.
const MAX_BOOTSTRAP_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_train: usize,
    pub n_classes: usize,
    pub n_features: usize,
    /// `S_i`: trees where training point `i` is out-of-bag.
    pub oob_trees: Vec<Vec<u32>>,
    /// `S̄_i`: trees where training point `i` is in-bag.
    pub inbag_trees: Vec<Vec<u32>>,
}

fn draw_bootstrap<R: Rng>(n: usize, rng: &mut R) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

impl Forest {
    /// Trains a forest on `x` (training rows only) with labels in `0..n_classes`.
    pub fn fit(
        x: ArrayView2<f64>,
        labels: &[usize],
        n_classes: usize,
        params: &ForestParams,
    ) -> Result<Forest> {
        let n = x.nrows();
        if labels.len() != n {
            return Err(RfaeError::RowCountMismatch {
                expected: n,
                found: labels.len(),
            });
        }
        if params.n_trees == 0 {
            return Err(RfaeError::invalid("forest needs at least one tree"));
        }
        if params.min_leaf == 0 {
            return Err(RfaeError::invalid("min_leaf must be at least 1"));
        }
        let mut present = vec![false; n_classes];
        for &y in labels {
            if y >= n_classes {
                return Err(RfaeError::invalid(format!("label {y} outside 0..{n_classes}")));
            }
            present[y] = true;
        }
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(RfaeError::Degenerate(
                "forest training rows must contain at least two classes".into(),
            ));
        }
        let d = x.ncols();
        let grow = GrowParams {
            mtry: params.mtry.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).max(1),
            min_leaf: params.min_leaf,
            max_depth: params.max_depth,
        };
        let bootstraps = Self::draw_bootstraps(n, params);
        let trees: Vec<Tree> = bootstraps
            .into_par_iter()
            .enumerate()
            .map(|(t, counts)| {
                let mut rng = rng::stream(params.seed, "tree", t as u64);
                Tree::grow(x, labels, n_classes, counts, &grow, &mut rng)
            })
            .collect();
        Ok(Self::from_trees(trees, n, n_classes, d))
    }

    /// Draws all bootstraps, redrawing the whole set when some point would be
    /// in-bag everywhere or out-of-bag everywhere. Redraws only apply when
    /// coverage is attainable, i.e. with at least two trees.
    fn draw_bootstraps(n: usize, params: &ForestParams) -> Vec<Vec<u32>> {
        let mut attempt = 0u64;
        loop {
            let boots: Vec<Vec<u32>> = (0..params.n_trees)
                .into_par_iter()
                .map(|t| {
                    let mut rng = rng::stream(params.seed, "bootstrap", (attempt << 32) | t as u64);
                    draw_bootstrap(n, &mut rng)
                })
                .collect();
            let covered = (0..n).all(|i| {
                let inbag = boots.iter().filter(|c| c[i] > 0).count();
                inbag > 0 && inbag < boots.len()
            });
            if covered || params.n_trees < 2 || n < 2 {
                return boots;
            }
            attempt += 1;
            if attempt >= MAX_BOOTSTRAP_ATTEMPTS {
                log::warn!("bootstrap coverage not reached after {attempt} draws");
                return boots;
            }
        }
    }

    /// Assembles a forest from already-grown trees, recomputing `S_i` and `S̄_i`.
    pub fn from_trees(trees: Vec<Tree>, n_train: usize, n_classes: usize, n_features: usize) -> Forest {
        let mut oob_trees = vec![Vec::new(); n_train];
        let mut inbag_trees = vec![Vec::new(); n_train];
        for (t, tree) in trees.iter().enumerate() {
            for i in 0..n_train {
                if tree.is_inbag(i) {
                    inbag_trees[i].push(t as u32);
                } else {
                    oob_trees[i].push(t as u32);
                }
            }
        }
        Forest {
            trees,
            n_train,
            n_classes,
            n_features,
            oob_trees,
            inbag_trees,
        }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    fn vote<'a>(&self, leaves: impl Iterator<Item = (&'a Tree, usize)>) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for (tree, leaf) in leaves {
            votes[tree.leaf_class[leaf] as usize] += 1;
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        best
    }

    /// Majority vote over all trees; ties go to the lowest class index.
    pub fn predict_one(&self, x: ArrayView1<f64>) -> usize {
        self.vote(self.trees.iter().map(|t| (t, t.route(x))))
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        let rows: Vec<_> = x.outer_iter().collect();
        rows.into_par_iter().map(|r| self.predict_one(r)).collect()
    }

    /// Out-of-bag accuracy over points with at least one OOB tree.
    pub fn oob_accuracy(&self, labels: &[usize]) -> f64 {
        let mut hits = 0usize;
        let mut seen = 0usize;
        for i in 0..self.n_train {
            if self.oob_trees[i].is_empty() {
                continue;
            }
            let pred = self.vote(self.oob_trees[i].iter().map(|&t| {
                let tree = &self.trees[t as usize];
                (tree, tree.leaf_of_train[i] as usize)
            }));
            seen += 1;
            hits += usize::from(pred == labels[i]);
        }
        if seen == 0 {
            0.0
        } else {
            hits as f64 / seen as f64
        }
    }
}
