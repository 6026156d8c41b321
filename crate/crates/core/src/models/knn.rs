//! k-nearest-neighbor classifier over standardized features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    class_count, validate_features, ModelDescriptor, ModelError, ModelFamily, ModelKind,
    Standardizer, TrainedModel,
};
use crate::features::FeatureVector;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    scaler: Standardizer,
    train_rows: Vec<Vec<f64>>,
    train_labels: Vec<usize>,
    classes: usize,
}

impl KnnModel {
    pub fn num_classes(&self) -> usize {
        self.classes
    }

    /// Class frequencies among the k nearest neighbors (Euclidean over
    /// standardized features). Distance ties resolve by training index.
    pub fn predict(&self, x: &FeatureVector) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.scaler.dimension() {
            return Err(ModelError::FeatureDimension {
                expected: self.scaler.dimension(),
                got: x.len(),
            });
        }
        let z = self.scaler.apply(x.values());
        let mut dists: Vec<(f64, usize)> = self
            .train_rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let d2: f64 = row.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        dists.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut probs = vec![0.0; self.classes];
        for &(_, idx) in dists.iter().take(self.k) {
            probs[self.train_labels[idx]] += 1.0;
        }
        for p in &mut probs {
            *p /= self.k as f64;
        }
        Ok(probs)
    }
}

/// Fit a k-NN model; standardization statistics freeze from the training
/// set so later unit changes in raw features cannot move predictions.
pub fn fit_knn(
    features: &[FeatureVector],
    labels: &[usize],
    k: usize,
) -> Result<TrainedModel, ModelError> {
    validate_features(features, labels)?;
    if k == 0 {
        return Err(ModelError::ZeroK);
    }
    if k > features.len() {
        return Err(ModelError::KTooLarge {
            k,
            n: features.len(),
        });
    }
    let rows: Vec<&[f64]> = features.iter().map(|f| f.values()).collect();
    let scaler = Standardizer::fit(&rows);
    let train_rows: Vec<Vec<f64>> = rows.iter().map(|r| scaler.apply(r)).collect();

    let model = KnnModel {
        k,
        scaler,
        train_rows,
        train_labels: labels.to_vec(),
        classes: class_count(labels),
    };
    Ok(TrainedModel {
        descriptor: ModelDescriptor {
            name: "knn".to_string(),
            family: ModelFamily::FeaturePool,
            hyperparams: BTreeMap::from([("k".to_string(), k.to_string())]),
            seed: 0,
            warning: None,
        },
        kind: ModelKind::Knn(model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Feature, FeaturePool};
    use crate::models::ModelInput;

    fn vec1(v: f64) -> FeatureVector {
        // single informative dimension padded to a valid pool layout
        let pool = FeaturePool::new(Feature::GROUND_TRUTH.to_vec()).unwrap();
        FeatureVector::from_parts(pool.features().to_vec(), vec![v, 0.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn one_nn_picks_the_closest_class() {
        let xs = vec![vec1(0.0), vec1(10.0)];
        let ys = vec![0, 1];
        let model = fit_knn(&xs, &ys, 1).unwrap();
        let probs = model.predict(ModelInput::Features(&vec1(1.0))).unwrap();
        assert_eq!(probs, vec![1.0, 0.0]);
    }

    #[test]
    fn query_on_a_training_point_returns_its_class() {
        let xs = vec![vec1(-3.0), vec1(2.0), vec1(7.0)];
        let ys = vec![1, 0, 1];
        let model = fit_knn(&xs, &ys, 1).unwrap();
        let probs = model.predict(ModelInput::Features(&vec1(2.0))).unwrap();
        assert_eq!(probs, vec![1.0, 0.0]);
    }

    #[test]
    fn distance_ties_resolve_by_training_index() {
        // After standardizing [-1, 3, 7] (mean 3), the query at 1 sits at an
        // exact float tie between index 0 and index 1: the standardized gaps
        // are 2/s and 4/s = 2 * (2/s), and scaling by two is exact, so the
        // two distances share every bit. Index order must break the tie.
        let xs = vec![vec1(-1.0), vec1(3.0), vec1(7.0)];
        let ys = vec![0, 1, 1];
        let model = fit_knn(&xs, &ys, 1).unwrap();
        let probs = model.predict(ModelInput::Features(&vec1(1.0))).unwrap();
        assert_eq!(probs, vec![1.0, 0.0]);

        // k = 2 takes both tied points: a 50/50 vote
        let model = fit_knn(&xs, &ys, 2).unwrap();
        let probs = model.predict(ModelInput::Features(&vec1(1.0))).unwrap();
        assert_eq!(probs, vec![0.5, 0.5]);
    }

    #[test]
    fn k_bounds_are_enforced() {
        let xs = vec![vec1(0.0), vec1(1.0)];
        let ys = vec![0, 1];
        assert!(matches!(fit_knn(&xs, &ys, 0), Err(ModelError::ZeroK)));
        assert!(matches!(
            fit_knn(&xs, &ys, 3),
            Err(ModelError::KTooLarge { k: 3, n: 2 })
        ));
        assert!(matches!(
            fit_knn(&[], &[], 1),
            Err(ModelError::EmptyTrainingSet)
        ));
    }
}
