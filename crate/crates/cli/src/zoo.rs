//! Model selection and per-cell training.

use std::collections::BTreeMap;

use xsei_core::models::{
    fit_cart, fit_ensemble, fit_knn, fit_lbnn, fit_linear, EnsembleConfig, LbnnConfig,
    LinearConfig, PoolVariant, TrainedModel,
};
use xsei_core::nncore::{AdamConfig, Augment, EpochStats, TrainConfig};
use xsei_core::seed::derive_seed;

use crate::config::ExperimentConfig;
use crate::data::CellData;
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSelect {
    Knn,
    Cart,
    Ensemble,
    Linear,
    LbnnAvg,
    LbnnMax,
}

impl ModelSelect {
    pub const ALL: [ModelSelect; 6] = [
        ModelSelect::Knn,
        ModelSelect::Cart,
        ModelSelect::Ensemble,
        ModelSelect::Linear,
        ModelSelect::LbnnAvg,
        ModelSelect::LbnnMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelSelect::Knn => "knn",
            ModelSelect::Cart => "cart",
            ModelSelect::Ensemble => "ensemble",
            ModelSelect::Linear => "linear",
            ModelSelect::LbnnAvg => "lbnn-avg",
            ModelSelect::LbnnMax => "lbnn-max",
        }
    }

    pub fn parse(name: &str) -> Option<ModelSelect> {
        ModelSelect::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn parse_list(names: &[String]) -> Result<Vec<ModelSelect>, HarnessError> {
        names
            .iter()
            .map(|n| {
                ModelSelect::parse(n)
                    .ok_or_else(|| HarnessError::Config(format!("unknown model `{n}`")))
            })
            .collect()
    }

    /// Trains on raw windows rather than the feature pool.
    pub fn is_raw_signal(self) -> bool {
        matches!(self, ModelSelect::LbnnAvg | ModelSelect::LbnnMax)
    }
}

/// Everything a training pass produces: the fitted models in selection
/// order plus network loss curves by model name.
pub struct TrainedZoo {
    pub models: Vec<TrainedModel>,
    pub curves: BTreeMap<String, Vec<EpochStats>>,
}

/// Fit the selected models on a cell's training split. Each model draws
/// its own sub-seed, so adding or removing models never shifts another
/// model's stream.
pub fn train_zoo(
    selection: &[ModelSelect],
    cell: &CellData,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<TrainedZoo, HarnessError> {
    let train_features = cell.select_features(&cell.train_idx);
    let train_labels = cell.select_labels(&cell.train_idx);

    let mut models = Vec::with_capacity(selection.len());
    let mut curves = BTreeMap::new();

    for &select in selection {
        let model_seed = derive_seed(seed, &format!("fit/{}", select.name()));
        let zoo = &cfg.zoo;
        match select {
            ModelSelect::Knn => {
                models.push(fit_knn(&train_features, &train_labels, zoo.knn_k)?);
            }
            ModelSelect::Cart => {
                models.push(fit_cart(
                    &train_features,
                    &train_labels,
                    zoo.tree_max_depth,
                    zoo.tree_min_leaf,
                )?);
            }
            ModelSelect::Ensemble => {
                let ecfg = EnsembleConfig {
                    size: zoo.ensemble_size,
                    bootstrap: true,
                    feature_subset: zoo.ensemble_feature_subset,
                    max_depth: zoo.tree_max_depth,
                    min_leaf: zoo.tree_min_leaf,
                };
                models.push(fit_ensemble(&train_features, &train_labels, &ecfg, model_seed)?);
            }
            ModelSelect::Linear => {
                let lcfg = LinearConfig {
                    penalty: zoo.linear_penalty,
                    strength: zoo.linear_strength,
                    ..LinearConfig::default()
                };
                models.push(fit_linear(&train_features, &train_labels, &lcfg, model_seed)?);
            }
            ModelSelect::LbnnAvg | ModelSelect::LbnnMax => {
                let variant = if select == ModelSelect::LbnnAvg {
                    PoolVariant::Avg
                } else {
                    PoolVariant::Max
                };
                let train_windows = cell.select_windows(&cell.train_idx);
                let val_windows = cell.select_windows(&cell.val_idx);
                let val_labels = cell.select_labels(&cell.val_idx);
                let cycle = (20.0 / cell.sample_period_ms).round() as usize;
                let augment = (zoo.lbnn_augment_noise > 0.0).then(|| Augment {
                    sign_flip: true,
                    time_reverse: true,
                    cycle_shift: (zoo.lbnn_cycle_shift && cycle > 0).then_some(cycle),
                    noise_relative: zoo.lbnn_augment_noise,
                });
                let lcfg = LbnnConfig {
                    class_count: zoo.lbnn_classes,
                    train: TrainConfig {
                        epochs: zoo.lbnn_epochs,
                        batch_size: zoo.lbnn_batch_size,
                        adam: AdamConfig {
                            learning_rate: zoo.lbnn_learning_rate,
                            ..AdamConfig::default()
                        },
                        augment,
                    },
                };
                let fit = fit_lbnn(
                    (&train_windows, &train_labels),
                    (&val_windows, &val_labels),
                    variant,
                    &lcfg,
                    model_seed,
                )?;
                curves.insert(fit.model.name().to_string(), fit.curve);
                models.push(fit.model);
            }
        }
    }
    Ok(TrainedZoo { models, curves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_base_dataset, prepare_cell};

    #[test]
    fn selection_parses_and_round_trips() {
        for m in ModelSelect::ALL {
            assert_eq!(ModelSelect::parse(m.name()), Some(m));
        }
        assert_eq!(ModelSelect::parse("nope"), None);
    }

    #[test]
    fn feature_zoo_trains_on_a_tiny_cell() {
        let mut cfg = ExperimentConfig::default();
        cfg.windows_per_class_per_profile = 8;
        cfg.window_width = 4000;
        cfg.window_step = 2000;
        let base = build_base_dataset(&cfg, 3).unwrap();
        let cell = prepare_cell(&cfg, &base, 10, Some(5.0), 42).unwrap();
        let selection = [
            ModelSelect::Knn,
            ModelSelect::Cart,
            ModelSelect::Ensemble,
            ModelSelect::Linear,
        ];
        let zoo = train_zoo(&selection, &cell, &cfg, 11).unwrap();
        assert_eq!(zoo.models.len(), 4);
        let names: Vec<&str> = zoo.models.iter().map(|m| m.name()).collect();
        assert_eq!(names, vec!["knn", "cart", "ensemble", "linear"]);
    }
}
