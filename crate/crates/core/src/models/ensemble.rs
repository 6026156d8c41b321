//! Bagged CART ensemble: per-tree bootstrap resampling and random feature
//! subspaces, predictions averaged across members.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cart::{cart_from_parts, grow_tree, CartModel, TreeParams};
use super::{
    class_count, validate_features, ModelDescriptor, ModelError, ModelFamily, ModelKind,
    TrainedModel,
};
use crate::features::FeatureVector;
use crate::seed::rng_for;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub size: usize,
    /// Resample the training set with replacement per tree.
    pub bootstrap: bool,
    /// Number of candidate features per tree; `None` uses every feature.
    pub feature_subset: Option<usize>,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            size: 25,
            bootstrap: true,
            feature_subset: None,
            max_depth: 8,
            min_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleModel {
    members: Vec<CartModel>,
    classes: usize,
    dimension: usize,
}

impl EnsembleModel {
    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn members(&self) -> &[CartModel] {
        &self.members
    }

    /// Arithmetic mean of member probability vectors.
    pub fn predict(&self, x: &FeatureVector) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.dimension {
            return Err(ModelError::FeatureDimension {
                expected: self.dimension,
                got: x.len(),
            });
        }
        let mut probs = vec![0.0; self.classes];
        for tree in &self.members {
            for (acc, p) in probs.iter_mut().zip(tree.predict_row(x.values())) {
                *acc += p;
            }
        }
        let inv = 1.0 / self.members.len() as f64;
        for p in &mut probs {
            *p *= inv;
        }
        Ok(probs)
    }
}

/// Fit a bagged ensemble. Each member draws its bootstrap sample and
/// feature subset from an independent stream derived from `seed`, so the
/// forest is reproducible regardless of evaluation order. With
/// `size = 1`, bootstrap off, and no feature subset, the single member is
/// bit-identical to [`super::fit_cart`] on the same data.
pub fn fit_ensemble(
    features: &[FeatureVector],
    labels: &[usize],
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    let d = validate_features(features, labels)?;
    if cfg.size == 0 {
        return Err(ModelError::ZeroEnsemble);
    }
    let rows: Vec<&[f64]> = features.iter().map(|f| f.values()).collect();
    let classes = class_count(labels);
    let n = features.len();

    let mut members = Vec::with_capacity(cfg.size);
    for t in 0..cfg.size {
        let mut rng = rng_for(seed, &format!("tree/{t}"));

        let indices: Vec<usize> = if cfg.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };

        let allowed_features = match cfg.feature_subset {
            Some(m) if m < d => {
                let mut chosen = sample_without_replacement(d, m.max(1), &mut rng);
                chosen.sort_unstable();
                chosen
            }
            _ => (0..d).collect(),
        };

        let params = TreeParams {
            rows: &rows,
            labels,
            classes,
            max_depth: cfg.max_depth,
            min_leaf: cfg.min_leaf,
            allowed_features,
        };
        let root = grow_tree(&params, indices, 0);
        members.push(cart_from_parts(root, classes, d));
    }

    Ok(TrainedModel {
        descriptor: ModelDescriptor {
            name: "ensemble".to_string(),
            family: ModelFamily::FeaturePool,
            hyperparams: BTreeMap::from([
                ("size".to_string(), cfg.size.to_string()),
                ("bootstrap".to_string(), cfg.bootstrap.to_string()),
                (
                    "feature_subset".to_string(),
                    cfg.feature_subset.map_or("all".to_string(), |m| m.to_string()),
                ),
                ("max_depth".to_string(), cfg.max_depth.to_string()),
                ("min_leaf".to_string(), cfg.min_leaf.to_string()),
            ]),
            seed,
            warning: None,
        },
        kind: ModelKind::Ensemble(EnsembleModel {
            members,
            classes,
            dimension: d,
        }),
    })
}

/// Partial Fisher-Yates draw of `m` distinct values from `0..d`.
fn sample_without_replacement(d: usize, m: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..d).collect();
    for i in 0..m.min(d) {
        let j = rng.random_range(i..d);
        pool.swap(i, j);
    }
    pool.truncate(m.min(d));
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::test_support::toy_feature_set;
    use crate::models::{fit_cart, ModelInput};

    #[test]
    fn degenerate_ensemble_equals_single_cart() {
        let (xs, ys) = toy_feature_set(14);
        let cfg = EnsembleConfig {
            size: 1,
            bootstrap: false,
            feature_subset: None,
            max_depth: 6,
            min_leaf: 1,
        };
        let forest = fit_ensemble(&xs, &ys, &cfg, 42).unwrap();
        let single = fit_cart(&xs, &ys, 6, 1).unwrap();
        let tree = match &forest.kind {
            ModelKind::Ensemble(e) => &e.members()[0],
            _ => unreachable!(),
        };
        let cart = match &single.kind {
            ModelKind::Cart(c) => c,
            _ => unreachable!(),
        };
        assert_eq!(tree, cart);
    }

    #[test]
    fn prediction_is_the_mean_of_member_outputs() {
        let (xs, ys) = toy_feature_set(20);
        let cfg = EnsembleConfig {
            size: 3,
            ..EnsembleConfig::default()
        };
        let forest = fit_ensemble(&xs, &ys, &cfg, 7).unwrap();
        let members = match &forest.kind {
            ModelKind::Ensemble(e) => e.members(),
            _ => unreachable!(),
        };
        for x in xs.iter().take(5) {
            let got = forest.predict(ModelInput::Features(x)).unwrap();
            let mut manual = vec![0.0; 2];
            for tree in members {
                for (acc, p) in manual.iter_mut().zip(tree.predict_row(x.values())) {
                    *acc += p;
                }
            }
            for m in &mut manual {
                *m /= 3.0;
            }
            for (a, b) in got.iter().zip(&manual) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let (xs, ys) = toy_feature_set(16);
        let cfg = EnsembleConfig {
            size: 5,
            feature_subset: Some(3),
            ..EnsembleConfig::default()
        };
        let a = fit_ensemble(&xs, &ys, &cfg, 11).unwrap();
        let b = fit_ensemble(&xs, &ys, &cfg, 11).unwrap();
        let (ea, eb) = match (&a.kind, &b.kind) {
            (ModelKind::Ensemble(ea), ModelKind::Ensemble(eb)) => (ea, eb),
            _ => unreachable!(),
        };
        assert_eq!(ea.members(), eb.members());

        let c = fit_ensemble(&xs, &ys, &cfg, 12).unwrap();
        let ec = match &c.kind {
            ModelKind::Ensemble(e) => e,
            _ => unreachable!(),
        };
        assert_ne!(ea.members(), ec.members());
    }

    #[test]
    fn zero_size_is_rejected() {
        let (xs, ys) = toy_feature_set(6);
        let cfg = EnsembleConfig {
            size: 0,
            ..EnsembleConfig::default()
        };
        assert!(matches!(
            fit_ensemble(&xs, &ys, &cfg, 0),
            Err(ModelError::ZeroEnsemble)
        ));
    }
}
