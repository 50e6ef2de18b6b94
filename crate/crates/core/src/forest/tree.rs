//! Axis-aligned classification trees grown on weighted bootstrap samples.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;

/// One node of a tree. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf_id: usize,
    },
}

/// Growth limits for a single tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowParams {
    pub mtry: usize,
    /// Minimum bootstrap weight on each side of a split.
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

/// A trained tree together with its bootstrap bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
    /// `c_j(t)`: bootstrap multiplicity of every training point.
    pub inbag_counts: Vec<u32>,
    /// Leaf reached by every training point, in-bag or not.
    pub leaf_of_train: Vec<u32>,
    /// `|M(t)|` per leaf: summed multiplicity of the in-bag points it holds.
    pub leaf_mass: Vec<u32>,
    /// Majority class of the in-bag points in each leaf.
    pub leaf_class: Vec<u32>,
    /// In-bag training indices resident in each leaf (derived).
    pub leaf_inbag: Vec<Vec<u32>>,
}

impl Tree {
    pub fn n_leaves(&self) -> usize {
        self.leaf_mass.len()
    }

    pub fn route(&self, x: ArrayView1<f64>) -> usize {
        let mut node = 0;
        loop {
            match self.nodes[node] {
                TreeNode::Leaf { leaf_id } => return leaf_id,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn is_inbag(&self, i: usize) -> bool {
        self.inbag_counts[i] > 0
    }

    /// Assembles a tree from stored parts and rebuilds the leaf index.
    pub fn from_parts(
        nodes: Vec<TreeNode>,
        inbag_counts: Vec<u32>,
        leaf_of_train: Vec<u32>,
        leaf_mass: Vec<u32>,
        leaf_class: Vec<u32>,
    ) -> Tree {
        let mut tree = Tree {
            nodes,
            inbag_counts,
            leaf_of_train,
            leaf_mass,
            leaf_class,
            leaf_inbag: Vec::new(),
        };
        tree.rebuild_leaf_index();
        tree
    }

    /// Rebuilds `leaf_of_train`-dependent caches from the other fields.
    fn rebuild_leaf_index(&mut self) {
        let mut members = vec![Vec::new(); self.n_leaves()];
        for (j, (&leaf, &c)) in self.leaf_of_train.iter().zip(&self.inbag_counts).enumerate() {
            if c > 0 {
                members[leaf as usize].push(j as u32);
            }
        }
        self.leaf_inbag = members;
    }

    /// Grows a tree on the training matrix with the given bootstrap counts.
    pub fn grow<R: Rng>(
        x: ArrayView2<f64>,
        labels: &[usize],
        n_classes: usize,
        inbag_counts: Vec<u32>,
        params: &GrowParams,
        rng: &mut R,
    ) -> Tree {
        let samples: Vec<u32> = (0..x.nrows() as u32)
            .filter(|&i| inbag_counts[i as usize] > 0)
            .collect();
        let mut builder = Builder {
            x,
            labels,
            n_classes,
            weights: &inbag_counts,
            params,
            nodes: Vec::new(),
            leaf_class: Vec::new(),
            leaf_mass: Vec::new(),
        };
        builder.build(samples, 0, rng);
        let Builder {
            nodes,
            leaf_class,
            leaf_mass,
            ..
        } = builder;
        let mut tree = Tree {
            nodes,
            inbag_counts,
            leaf_of_train: Vec::new(),
            leaf_mass,
            leaf_class,
            leaf_inbag: Vec::new(),
        };
        tree.leaf_of_train = x.outer_iter().map(|row| tree.route(row) as u32).collect();
        tree.rebuild_leaf_index();
        tree
    }
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    labels: &'a [usize],
    n_classes: usize,
    weights: &'a [u32],
    params: &'a GrowParams,
    nodes: Vec<TreeNode>,
    leaf_class: Vec<u32>,
    leaf_mass: Vec<u32>,
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn gini_sum(counts: &[f64], total: f64) -> f64 {
    // total * gini = total - sum(c^2) / total
    if total <= 0.0 {
        return 0.0;
    }
    total - counts.iter().map(|c| c * c).sum::<f64>() / total
}

impl Builder<'_> {
    fn class_weights(&self, samples: &[u32]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_classes];
        for &s in samples {
            counts[self.labels[s as usize]] += f64::from(self.weights[s as usize]);
        }
        counts
    }

    fn push_leaf(&mut self, samples: &[u32], counts: &[f64]) -> usize {
        let leaf_id = self.leaf_class.len();
        let mut best = 0;
        for (c, &w) in counts.iter().enumerate() {
            if w > counts[best] {
                best = c;
            }
        }
        self.leaf_class.push(best as u32);
        self.leaf_mass
            .push(samples.iter().map(|&s| self.weights[s as usize]).sum());
        self.nodes.push(TreeNode::Leaf { leaf_id });
        self.nodes.len() - 1
    }

    fn build<R: Rng>(&mut self, samples: Vec<u32>, depth: usize, rng: &mut R) -> usize {
        let counts = self.class_weights(&samples);
        let total: f64 = counts.iter().sum();
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || total < 2.0 * self.params.min_leaf as f64 {
            return self.push_leaf(&samples, &counts);
        }
        let Some(split) = self.find_split(&samples, &counts, total, rng) else {
            return self.push_leaf(&samples, &counts);
        };
        let (left_s, right_s): (Vec<u32>, Vec<u32>) = samples
            .iter()
            .partition(|&&s| self.x[[s as usize, split.feature]] <= split.threshold);
        let idx = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { leaf_id: usize::MAX });
        let left = self.build(left_s, depth + 1, rng);
        let right = self.build(right_s, depth + 1, rng);
        self.nodes[idx] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        idx
    }

    /// Examines features in random order. After `mtry` features the search
    /// stops as soon as a valid split exists. Among examined features the
    /// best impurity wins, ties going to the lower feature index and then the
    /// lower threshold.
    fn find_split<R: Rng>(
        &self,
        samples: &[u32],
        parent_counts: &[f64],
        total: f64,
        rng: &mut R,
    ) -> Option<Split> {
        let d = self.x.ncols();
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(rng);
        let mtry = self.params.mtry.clamp(1, d);
        let parent_impurity = gini_sum(parent_counts, total);
        let min_leaf = self.params.min_leaf as f64;

        let mut candidates: Vec<Split> = Vec::new();
        let mut sorted: Vec<(f64, u32)> = Vec::with_capacity(samples.len());
        for (examined, &feature) in order.iter().enumerate() {
            if examined >= mtry && !candidates.is_empty() {
                break;
            }
            sorted.clear();
            sorted.extend(samples.iter().map(|&s| (self.x[[s as usize, feature]], s)));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if sorted[0].0 == sorted[sorted.len() - 1].0 {
                continue;
            }
            let mut left = vec![0.0; self.n_classes];
            let mut left_total = 0.0;
            let mut best: Option<Split> = None;
            for w in 0..sorted.len() - 1 {
                let (v, s) = sorted[w];
                let wt = f64::from(self.weights[s as usize]);
                left[self.labels[s as usize]] += wt;
                left_total += wt;
                let next = sorted[w + 1].0;
                if next == v {
                    continue;
                }
                let right_total = total - left_total;
                if left_total < min_leaf || right_total < min_leaf {
                    continue;
                }
                let right: Vec<f64> = parent_counts
                    .iter()
                    .zip(&left)
                    .map(|(p, l)| p - l)
                    .collect();
                let impurity = gini_sum(&left, left_total) + gini_sum(&right, right_total);
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(Split {
                        feature,
                        threshold,
                        impurity,
                    });
                }
            }
            if let Some(b) = best {
                if b.impurity < parent_impurity + 1e-12 * total {
                    candidates.push(b);
                }
            }
        }
        candidates.into_iter().min_by(|a, b| {
            a.impurity
                .total_cmp(&b.impurity)
                .then(a.feature.cmp(&b.feature))
                .then(a.threshold.total_cmp(&b.threshold))
        })
    }
}
