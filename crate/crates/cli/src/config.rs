//! Declarative experiment configuration: one JSON file drives synthesis,
//! training, attribution, and the sweep axes. CLI flags override fields.

use std::path::Path;

use serde::{Deserialize, Serialize};

use xsei_core::explain::{OcclusionBaseline, RemovalStrategy};
use xsei_core::models::Penalty;
use xsei_core::signal::{ArcBehavior, ArcSignature, Harmonic, LoadProfile};

use crate::{io_err, HarnessError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// Per-family model hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ZooParams {
    pub knn_k: usize,
    pub tree_max_depth: usize,
    pub tree_min_leaf: usize,
    pub ensemble_size: usize,
    pub ensemble_feature_subset: Option<usize>,
    pub linear_penalty: Penalty,
    pub linear_strength: f64,
    pub lbnn_classes: usize,
    pub lbnn_epochs: usize,
    pub lbnn_batch_size: usize,
    pub lbnn_learning_rate: f64,
    /// Relative std of the per-epoch training noise; 0 disables all
    /// network-input augmentation.
    pub lbnn_augment_noise: f64,
    /// Whole-cycle circular shifts during training.
    pub lbnn_cycle_shift: bool,
}

impl Default for ZooParams {
    fn default() -> Self {
        ZooParams {
            knn_k: 5,
            tree_max_depth: 8,
            tree_min_leaf: 2,
            ensemble_size: 25,
            ensemble_feature_subset: Some(4),
            linear_penalty: Penalty::L2,
            linear_strength: 1e-3,
            lbnn_classes: 2,
            lbnn_epochs: 100,
            lbnn_batch_size: 32,
            lbnn_learning_rate: 1e-3,
            lbnn_augment_noise: 0.10,
            lbnn_cycle_shift: true,
        }
    }
}

/// Attribution and scoring knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainParams {
    pub regions: usize,
    pub removal: RemovalStrategy,
    pub occlusion_baseline: OcclusionBaseline,
    pub res_threshold: f64,
    pub top_k: usize,
    /// How many test samples the Shapley pass explains.
    pub shap_samples: usize,
    /// Background rows for feature removal (seeded training subset).
    pub background_rows: usize,
    /// Noisy realizations of each explanation window for occlusion.
    pub occlusion_realizations: usize,
    /// Independent explanation windows; their region grids concatenate
    /// into one pooled Eq-6 comparison.
    pub explain_windows: usize,
    /// Arc fraction of the synthesized explanation window.
    pub explain_arc_fraction: f64,
    /// Arc events in the explanation window; several short events give
    /// the region score its granularity.
    pub explain_arc_events: usize,
    /// Which profile the explanation window is synthesized from.
    pub explain_profile_index: usize,
    /// Tolerance for pairwise ground-truth region derivation.
    pub pairwise_tolerance: f64,
}

impl Default for ExplainParams {
    fn default() -> Self {
        ExplainParams {
            regions: 20,
            removal: RemovalStrategy::Baseline,
            occlusion_baseline: OcclusionBaseline::Reference,
            res_threshold: 0.05,
            top_k: 5,
            shap_samples: 12,
            background_rows: 128,
            occlusion_realizations: 24,
            explain_windows: 4,
            explain_arc_fraction: 0.45,
            explain_arc_events: 1,
            explain_profile_index: 0,
            pairwise_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub class_names: Vec<String>,
    pub profiles: Vec<LoadProfile>,
    /// Windows of each class taken from each profile.
    pub windows_per_class_per_profile: usize,
    pub window_width: usize,
    pub window_step: usize,
    /// Arc-content fraction above which a window is labeled arc.
    pub arc_label_threshold: f64,
    /// Arc event scales in base-rate samples: one arc recording is
    /// synthesized per scale and the arc windows are drawn evenly from
    /// them. Long events teach whole-window discrimination; cycle-scale
    /// strikes cover partial-arc windows.
    pub arc_event_samples: Vec<usize>,
    pub split: SplitRatios,
    /// Decimation factors of the sample-time sweep.
    pub sample_time_factors: Vec<usize>,
    /// SNR axis in dB; `null` entries mean no injected noise.
    pub snr_dbs: Vec<Option<f64>>,
    /// Independent repetitions of every cell, each with its own derived
    /// base seed.
    pub seed_repeats: usize,
    /// Model selection by name.
    pub models: Vec<String>,
    pub zoo: ZooParams,
    pub explain: ExplainParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            class_names: vec!["normal".to_string(), "arc".to_string()],
            profiles: default_profiles(),
            windows_per_class_per_profile: 150,
            window_width: 10_000,
            window_step: 5_000,
            arc_label_threshold: 0.1,
            arc_event_samples: vec![250_000],
            split: SplitRatios::default(),
            sample_time_factors: vec![1, 2, 5, 10, 20],
            snr_dbs: vec![
                Some(-5.0),
                Some(-3.0),
                Some(-1.0),
                Some(1.0),
                Some(3.0),
                Some(5.0),
            ],
            seed_repeats: 1,
            models: vec![
                "knn".to_string(),
                "cart".to_string(),
                "ensemble".to_string(),
                "linear".to_string(),
                "lbnn-avg".to_string(),
                "lbnn-max".to_string(),
            ],
            zoo: ZooParams::default(),
            explain: ExplainParams::default(),
        }
    }
}

/// Two combined-load profiles with distinct arc regimes: a switching bank
/// whose arc substitutes the whole waveshape, and a motor load whose arc
/// keeps the carrier but adds a shoulder and transient spikes.
pub fn default_profiles() -> Vec<LoadProfile> {
    vec![
        LoadProfile {
            name: "switching-bank".to_string(),
            amplitude: 8.0,
            sample_period_ms: 5e-3,
            harmonics: vec![
                Harmonic {
                    order: 3,
                    amplitude: 0.06,
                    phase: 0.4,
                },
                Harmonic {
                    order: 5,
                    amplitude: 0.03,
                    phase: 1.1,
                },
                Harmonic {
                    order: 21,
                    amplitude: 0.012,
                    phase: 0.0,
                },
            ],
            noise_floor: 0.008,
            arc: ArcBehavior {
                fraction: 0.55,
                events: 1,
                signature: ArcSignature {
                    shoulder: 0.45,
                    peak_distortion: 0.3,
                    spike_rate: 8.0,
                    spike_amplitude: 0.9,
                    triangle_morph: 0.25,
                },
            },
        },
        LoadProfile {
            name: "motor-drive".to_string(),
            amplitude: 6.5,
            sample_period_ms: 5e-3,
            harmonics: vec![Harmonic {
                order: 3,
                amplitude: 0.02,
                phase: 0.0,
            }],
            noise_floor: 0.004,
            arc: ArcBehavior {
                fraction: 0.55,
                events: 1,
                signature: ArcSignature {
                    shoulder: 0.5,
                    peak_distortion: 0.2,
                    spike_rate: 14.0,
                    spike_amplitude: 1.0,
                    triangle_morph: 0.15,
                },
            },
        },
    ]
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| io_err(path, e))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.class_names.len() < 2 {
            return fail("need at least two class names".to_string());
        }
        if self.profiles.is_empty() {
            return fail("need at least one load profile".to_string());
        }
        if self.window_width == 0 || self.window_step == 0 {
            return fail("window width and step must be >= 1".to_string());
        }
        let s = &self.split;
        if (s.train + s.val + s.test - 1.0).abs() > 1e-9 {
            return fail(format!(
                "split ratios must sum to 1, got {} + {} + {}",
                s.train, s.val, s.test
            ));
        }
        if self.sample_time_factors.iter().any(|&f| f == 0) {
            return fail("sample-time factors must be >= 1".to_string());
        }
        if self.seed_repeats == 0 {
            return fail("seed_repeats must be >= 1".to_string());
        }
        if self.explain.explain_profile_index >= self.profiles.len() {
            return fail(format!(
                "explain_profile_index {} outside {} profiles",
                self.explain.explain_profile_index,
                self.profiles.len()
            ));
        }
        if self.models.is_empty() {
            return fail("model selection is empty".to_string());
        }
        for name in &self.models {
            crate::zoo::ModelSelect::parse(name)
                .ok_or_else(|| HarnessError::Config(format!("unknown model `{name}`")))?;
        }
        Ok(())
    }

    /// Canonical hash covering every field that affects outputs.
    pub fn content_hash(&self, root_seed: u64) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut bytes = json.into_bytes();
        bytes.extend_from_slice(&root_seed.to_le_bytes());
        format!("{:016x}", xsei_core::seed::fnv1a64(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(json, serde_json::to_string(&back).unwrap());
    }

    #[test]
    fn hash_tracks_config_and_seed() {
        let cfg = ExperimentConfig::default();
        let mut other = cfg.clone();
        other.windows_per_class_per_profile = 10;
        assert_ne!(cfg.content_hash(1), other.content_hash(1));
        assert_ne!(cfg.content_hash(1), cfg.content_hash(2));
        assert_eq!(cfg.content_hash(1), cfg.content_hash(1));
    }

    #[test]
    fn bad_split_is_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.split.train = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_model_is_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.models.push("gradient-boosting".to_string());
        assert!(cfg.validate().is_err());
    }
}
