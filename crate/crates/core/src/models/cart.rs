//! CART-style binary classification tree grown by Gini impurity.
//!
//! Trees consume raw feature values: any strictly monotone rescaling of a
//! column leaves the grown splits (and predictions) unchanged, so no
//! standardization is applied. Split search walks features in pool order
//! and thresholds in ascending order, keeping the first strict improvement,
//! which makes growth fully deterministic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    class_count, validate_features, ModelDescriptor, ModelError, ModelFamily, ModelKind,
    TrainedModel,
};
use crate::features::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        probs: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartModel {
    root: TreeNode,
    classes: usize,
    dimension: usize,
}

impl CartModel {
    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.dimension {
            return Err(ModelError::FeatureDimension {
                expected: self.dimension,
                got: x.len(),
            });
        }
        Ok(self.predict_row(x.values()))
    }

    pub(crate) fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { probs } => return probs.clone(),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

/// Shared grower, also used by the bagged ensemble.
pub(crate) struct TreeParams<'a> {
    pub rows: &'a [&'a [f64]],
    pub labels: &'a [usize],
    pub classes: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Feature indices the grower may split on, ascending.
    pub allowed_features: Vec<usize>,
}

pub(crate) fn grow_tree(params: &TreeParams<'_>, indices: Vec<usize>, depth: usize) -> TreeNode {
    let counts = label_counts(params, &indices);
    let gini = gini_impurity(&counts, indices.len());

    let stop = depth >= params.max_depth
        || gini == 0.0
        || indices.len() < 2 * params.min_leaf.max(1)
        || indices.len() < 2;
    if !stop {
        if let Some((feature, threshold)) = best_split(params, &indices, gini) {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .partition(|&&i| params.rows[i][feature] <= threshold);
            let left = grow_tree(params, left_idx, depth + 1);
            let right = grow_tree(params, right_idx, depth + 1);
            return TreeNode::Split {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
    }

    let total = indices.len() as f64;
    TreeNode::Leaf {
        probs: counts.iter().map(|&c| c as f64 / total).collect(),
    }
}

fn label_counts(params: &TreeParams<'_>, indices: &[usize]) -> Vec<usize> {
    let mut counts = vec![0usize; params.classes];
    for &i in indices {
        counts[params.labels[i]] += 1;
    }
    counts
}

fn gini_impurity(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / nf;
            p * p
        })
        .sum::<f64>()
}

/// Best (feature, threshold) by weighted child Gini; `None` when no split
/// satisfies the leaf minimum or strictly improves on the parent.
fn best_split(params: &TreeParams<'_>, indices: &[usize], parent_gini: f64) -> Option<(usize, f64)> {
    let n = indices.len();
    let min_leaf = params.min_leaf.max(1);
    let mut best: Option<(f64, usize, f64)> = None;

    for &feature in &params.allowed_features {
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_unstable_by(|&a, &b| {
            params.rows[a][feature]
                .total_cmp(&params.rows[b][feature])
                .then(a.cmp(&b))
        });

        let mut left_counts = vec![0usize; params.classes];
        let mut right_counts = label_counts(params, indices);
        for cut in 1..n {
            let moved = order[cut - 1];
            left_counts[params.labels[moved]] += 1;
            right_counts[params.labels[moved]] -= 1;

            let prev = params.rows[order[cut - 1]][feature];
            let next = params.rows[order[cut]][feature];
            if prev == next {
                continue; // identical values cannot be separated
            }
            if cut < min_leaf || n - cut < min_leaf {
                continue;
            }
            let g_left = gini_impurity(&left_counts, cut);
            let g_right = gini_impurity(&right_counts, n - cut);
            let weighted =
                (cut as f64 * g_left + (n - cut) as f64 * g_right) / n as f64;
            let improves = weighted < parent_gini - 1e-12;
            let beats_best = best.map(|(s, _, _)| weighted < s).unwrap_or(true);
            if improves && beats_best {
                best = Some((weighted, feature, 0.5 * (prev + next)));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Grow a single CART tree on raw features. A `max_depth` of 0 yields the
/// majority-proportion stump.
pub fn fit_cart(
    features: &[FeatureVector],
    labels: &[usize],
    max_depth: usize,
    min_leaf: usize,
) -> Result<TrainedModel, ModelError> {
    let d = validate_features(features, labels)?;
    let rows: Vec<&[f64]> = features.iter().map(|f| f.values()).collect();
    let classes = class_count(labels);
    let params = TreeParams {
        rows: &rows,
        labels,
        classes,
        max_depth,
        min_leaf,
        allowed_features: (0..d).collect(),
    };
    let root = grow_tree(&params, (0..features.len()).collect(), 0);
    Ok(TrainedModel {
        descriptor: ModelDescriptor {
            name: "cart".to_string(),
            family: ModelFamily::FeaturePool,
            hyperparams: BTreeMap::from([
                ("max_depth".to_string(), max_depth.to_string()),
                ("min_leaf".to_string(), min_leaf.to_string()),
            ]),
            seed: 0,
            warning: None,
        },
        kind: ModelKind::Cart(CartModel {
            root,
            classes,
            dimension: d,
        }),
    })
}

pub(crate) fn cart_from_parts(root: TreeNode, classes: usize, dimension: usize) -> CartModel {
    CartModel {
        root,
        classes,
        dimension,
    }
}
