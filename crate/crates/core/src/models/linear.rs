//! Regularized multinomial logistic regression over standardized features,
//! trained by full-batch gradient descent. The L1 penalty is applied as a
//! proximal soft-threshold after each step, so sufficiently strong
//! regularization produces exact zero weights; biases are never penalized.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    class_count, validate_features, ModelDescriptor, ModelError, ModelFamily, ModelKind,
    Standardizer, TrainedModel,
};
use crate::features::FeatureVector;
use crate::nncore::softmax_in_place;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearConfig {
    pub penalty: Penalty,
    pub strength: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            penalty: Penalty::L2,
            strength: 1e-3,
            learning_rate: 0.1,
            max_iters: 500,
            tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    scaler: Standardizer,
    /// Row-major `classes x dimension`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    classes: usize,
    dimension: usize,
    pub converged: bool,
}

impl LinearModel {
    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.dimension {
            return Err(ModelError::FeatureDimension {
                expected: self.dimension,
                got: x.len(),
            });
        }
        let z = self.scaler.apply(x.values());
        Ok(self.predict_standardized(&z))
    }

    fn predict_standardized(&self, z: &[f64]) -> Vec<f64> {
        let mut logits = self.biases.clone();
        for c in 0..self.classes {
            let row = &self.weights[c * self.dimension..(c + 1) * self.dimension];
            logits[c] += row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>();
        }
        softmax_in_place(&mut logits);
        logits
    }
}

/// Fit the regularized linear classifier. Fitting is fully deterministic
/// (zero initialization, full-batch updates); a model that exhausts
/// `max_iters` before the parameter change drops under `tolerance` is
/// still returned, flagged through `descriptor.warning`.
pub fn fit_linear(
    features: &[FeatureVector],
    labels: &[usize],
    cfg: &LinearConfig,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    let d = validate_features(features, labels)?;
    let classes = class_count(labels);
    let n = features.len();

    let raw: Vec<&[f64]> = features.iter().map(|f| f.values()).collect();
    let scaler = Standardizer::fit(&raw);
    let rows: Vec<Vec<f64>> = raw.iter().map(|r| scaler.apply(r)).collect();

    let mut weights = vec![0.0f64; classes * d];
    let mut biases = vec![0.0f64; classes];
    let mut converged = false;

    let inv_n = 1.0 / n as f64;
    let mut grad_w = vec![0.0f64; classes * d];
    let mut grad_b = vec![0.0f64; classes];

    for _ in 0..cfg.max_iters {
        grad_w.fill(0.0);
        grad_b.fill(0.0);
        for (row, &label) in rows.iter().zip(labels) {
            let mut logits = biases.clone();
            for c in 0..classes {
                let wrow = &weights[c * d..(c + 1) * d];
                logits[c] += wrow.iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
            }
            softmax_in_place(&mut logits);
            for c in 0..classes {
                let err = logits[c] - f64::from(u8::from(c == label));
                grad_b[c] += err;
                let grow = &mut grad_w[c * d..(c + 1) * d];
                for (g, x) in grow.iter_mut().zip(row) {
                    *g += err * x;
                }
            }
        }

        let mut max_delta = 0.0f64;
        match cfg.penalty {
            Penalty::L2 => {
                for (w, g) in weights.iter_mut().zip(&grad_w) {
                    let step = cfg.learning_rate * (g * inv_n + cfg.strength * *w);
                    *w -= step;
                    max_delta = max_delta.max(step.abs());
                }
            }
            Penalty::L1 => {
                let shrink = cfg.learning_rate * cfg.strength;
                for (w, g) in weights.iter_mut().zip(&grad_w) {
                    let old = *w;
                    let moved = *w - cfg.learning_rate * g * inv_n;
                    *w = soft_threshold(moved, shrink);
                    max_delta = max_delta.max((*w - old).abs());
                }
            }
        }
        for (b, g) in biases.iter_mut().zip(&grad_b) {
            let step = cfg.learning_rate * g * inv_n;
            *b -= step;
            max_delta = max_delta.max(step.abs());
        }

        if max_delta < cfg.tolerance {
            converged = true;
            break;
        }
    }

    let warning = if converged {
        None
    } else {
        Some(format!(
            "gradient descent did not converge within {} iterations",
            cfg.max_iters
        ))
    };

    Ok(TrainedModel {
        descriptor: ModelDescriptor {
            name: "linear".to_string(),
            family: ModelFamily::FeaturePool,
            hyperparams: BTreeMap::from([
                (
                    "penalty".to_string(),
                    match cfg.penalty {
                        Penalty::L1 => "l1".to_string(),
                        Penalty::L2 => "l2".to_string(),
                    },
                ),
                ("strength".to_string(), cfg.strength.to_string()),
                ("learning_rate".to_string(), cfg.learning_rate.to_string()),
                ("max_iters".to_string(), cfg.max_iters.to_string()),
            ]),
            seed,
            warning,
        },
        kind: ModelKind::Linear(LinearModel {
            scaler,
            weights,
            biases,
            classes,
            dimension: d,
            converged,
        }),
    })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::test_support::toy_feature_set;
    use crate::models::{accuracy, EvalSet, ModelInput};

    #[test]
    fn separable_data_reaches_high_accuracy() {
        let (xs, ys) = toy_feature_set(40);
        let cfg = LinearConfig::default();
        let model = fit_linear(&xs, &ys, &cfg, 0).unwrap();
        let acc = accuracy(&model, EvalSet::Features(&xs), &ys).unwrap();
        assert!(acc >= 0.99, "train accuracy {acc}");
    }

    #[test]
    fn heavy_l2_shrinks_to_class_priors() {
        // unbalanced 3:1 labels; fully shrunk weights leave only the biases,
        // which settle at the log-prior solution
        let (xs, _) = toy_feature_set(40);
        let ys: Vec<usize> = (0..40).map(|i| usize::from(i % 4 == 0)).collect();
        let cfg = LinearConfig {
            penalty: Penalty::L2,
            strength: 50.0,
            learning_rate: 0.01,
            max_iters: 8000,
            tolerance: 1e-12,
        };
        let model = fit_linear(&xs, &ys, &cfg, 0).unwrap();
        let inner = match &model.kind {
            ModelKind::Linear(m) => m,
            _ => unreachable!(),
        };
        // the shrunk fixed point scales like |grad| / strength
        let max_w = inner.weights().iter().fold(0.0f64, |a, &w| a.max(w.abs()));
        assert!(max_w < 1e-2, "weights should collapse, max |w| = {max_w}");
        let probs = model.predict(ModelInput::Features(&xs[1])).unwrap();
        assert!((probs[0] - 0.75).abs() < 0.02, "prior for class 0: {}", probs[0]);
        assert!((probs[1] - 0.25).abs() < 0.02, "prior for class 1: {}", probs[1]);
    }

    #[test]
    fn strong_l1_zeroes_weights_exactly() {
        let (xs, ys) = toy_feature_set(30);
        let cfg = LinearConfig {
            penalty: Penalty::L1,
            strength: 0.5,
            learning_rate: 0.05,
            max_iters: 300,
            tolerance: 1e-9,
        };
        let model = fit_linear(&xs, &ys, &cfg, 0).unwrap();
        let inner = match &model.kind {
            ModelKind::Linear(m) => m,
            _ => unreachable!(),
        };
        let zeros = inner.weights().iter().filter(|&&w| w == 0.0).count();
        assert!(zeros >= 1, "expected exact zeros, got none");
    }

    #[test]
    fn iteration_cap_sets_the_warning_flag() {
        let (xs, ys) = toy_feature_set(20);
        let cfg = LinearConfig {
            max_iters: 2,
            tolerance: 1e-15,
            ..LinearConfig::default()
        };
        let model = fit_linear(&xs, &ys, &cfg, 0).unwrap();
        assert!(model.descriptor.warning.is_some());
    }
}
