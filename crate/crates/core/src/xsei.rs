//! Soft evaluation: ground-truth definitions, Jaccard feature-extraction
//! scores, and the per-model evaluation process.
//!
//! A model's soft score measures whether its attribution agrees with
//! defined ground truth, independent of accuracy. Feature-pool models are
//! scored by the overlap of their Shapley top-k features with the
//! ground-truth feature set; raw-signal models by the overlap of the
//! regions their occlusion maps flag with the regions where the arc
//! actually lives. Both reduce to `|intersection| / |union|` in `[0, 1]`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explain::{
    explain_features, occlude, occlude_with_reference, region_spans, ExplainError,
    OcclusionBaseline, RemovalStrategy, ShapleyAttribution,
};
use crate::features::{Feature, FeaturePool, FeatureVector};
use crate::models::{
    accuracy, EvalSet, ModelError, ModelFamily, ModelInput, TrainedModel,
};
use crate::nncore::argmax;
use crate::seed::derive_seed;
use crate::signal::SignalWindow;

#[derive(Debug, Error)]
pub enum XseiError {
    #[error("ground-truth feature set must not be empty")]
    EmptyGroundTruth,
    #[error("top-k must satisfy 1 <= k <= pool size {d}, got {k}")]
    BadTopK { k: usize, d: usize },
    #[error("no attributions supplied")]
    NoAttributions,
    #[error("attribution length {got} does not match pool size {expected}")]
    AttributionLength { expected: usize, got: usize },
    #[error("region vectors differ in length: {a} vs {b}")]
    RegionLength { a: usize, b: usize },
    #[error("both region vectors are empty of flags; the score is undefined")]
    DegenerateRegions,
    #[error("paired windows are misaligned: lengths {a} vs {b}")]
    MisalignedPair { a: usize, b: usize },
    #[error("region count {n} invalid for window length {len}")]
    BadRegionCount { n: usize, len: usize },
    #[error("threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("mask length {mask} does not match window length {len}")]
    MaskLength { mask: usize, len: usize },
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The feature names defined as correct arc indicators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthFeatures {
    pub names: BTreeSet<Feature>,
}

impl GroundTruthFeatures {
    pub fn new(names: BTreeSet<Feature>) -> Result<Self, XseiError> {
        if names.is_empty() {
            return Err(XseiError::EmptyGroundTruth);
        }
        Ok(GroundTruthFeatures { names })
    }
}

impl Default for GroundTruthFeatures {
    /// Variance, entropy, range, RMS, integral.
    fn default() -> Self {
        GroundTruthFeatures {
            names: Feature::GROUND_TRUTH.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionDerivation {
    /// From the synthesis arc mask.
    Mask,
    /// From a pairwise normal-vs-arc comparison.
    Pairwise,
}

/// Boolean region grid marking where the arc deviates from normal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthRegions {
    pub flags: Vec<bool>,
    pub derivation: RegionDerivation,
}

/// Region grid from an arc mask: region `n` is flagged when at least one
/// masked sample falls inside it.
pub fn ground_truth_regions_from_mask(
    mask: &[bool],
    window_len: usize,
    n: usize,
) -> Result<GroundTruthRegions, XseiError> {
    if mask.len() != window_len {
        return Err(XseiError::MaskLength {
            mask: mask.len(),
            len: window_len,
        });
    }
    if n == 0 || n > window_len {
        return Err(XseiError::BadRegionCount { n, len: window_len });
    }
    let flags = region_spans(window_len, n)
        .into_iter()
        .map(|(start, end)| mask[start..end].iter().any(|&f| f))
        .collect();
    Ok(GroundTruthRegions {
        flags,
        derivation: RegionDerivation::Mask,
    })
}

/// Region grid from an aligned normal/arc pair: region `n` is flagged when
/// the two windows differ by more than `tolerance` anywhere inside it.
pub fn ground_truth_regions_pairwise(
    normal: &SignalWindow,
    arc: &SignalWindow,
    n: usize,
    tolerance: f64,
) -> Result<GroundTruthRegions, XseiError> {
    if normal.len() != arc.len() {
        return Err(XseiError::MisalignedPair {
            a: normal.len(),
            b: arc.len(),
        });
    }
    let len = normal.len();
    if n == 0 || n > len {
        return Err(XseiError::BadRegionCount { n, len });
    }
    let flags = region_spans(len, n)
        .into_iter()
        .map(|(start, end)| {
            normal.samples[start..end]
                .iter()
                .zip(&arc.samples[start..end])
                .any(|(a, b)| (a - b).abs() > tolerance)
        })
        .collect();
    Ok(GroundTruthRegions {
        flags,
        derivation: RegionDerivation::Pairwise,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    ShapTopK,
    Occlusion,
}

/// A Jaccard agreement score with its integer provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftScore {
    pub value: f64,
    pub numerator: usize,
    pub denominator: usize,
    pub method: ScoreMethod,
}

impl SoftScore {
    fn new(numerator: usize, denominator: usize, method: ScoreMethod) -> Self {
        debug_assert!(denominator >= 1);
        SoftScore {
            value: numerator as f64 / denominator as f64,
            numerator,
            denominator,
            method,
        }
    }
}

/// Rank pool features by mean `|phi|` across the explained samples and
/// return the top `k`; ties break toward the earlier pool position.
pub fn top_k_features(
    pool: &FeaturePool,
    attributions: &[ShapleyAttribution],
    k: usize,
) -> Result<Vec<Feature>, XseiError> {
    if attributions.is_empty() {
        return Err(XseiError::NoAttributions);
    }
    let d = pool.d();
    if k == 0 || k > d {
        return Err(XseiError::BadTopK { k, d });
    }
    for a in attributions {
        if a.phi.len() != d {
            return Err(XseiError::AttributionLength {
                expected: d,
                got: a.phi.len(),
            });
        }
    }
    let scores = mean_abs_phi(attributions, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(order[..k].iter().map(|&i| pool.features()[i]).collect())
}

pub(crate) fn mean_abs_phi(attributions: &[ShapleyAttribution], d: usize) -> Vec<f64> {
    let mut scores = vec![0.0f64; d];
    for a in attributions {
        for (s, phi) in scores.iter_mut().zip(&a.phi) {
            *s += phi.abs();
        }
    }
    let inv = 1.0 / attributions.len() as f64;
    for s in &mut scores {
        *s *= inv;
    }
    scores
}

/// Jaccard agreement between the ground-truth features and a top-k set.
pub fn score_feature_pool(
    truth: &GroundTruthFeatures,
    top_k: &[Feature],
) -> Result<SoftScore, XseiError> {
    if truth.names.is_empty() {
        return Err(XseiError::EmptyGroundTruth);
    }
    if top_k.is_empty() {
        return Err(XseiError::NoAttributions);
    }
    let shap: BTreeSet<Feature> = top_k.iter().copied().collect();
    let inter = truth.names.intersection(&shap).count();
    let union = truth.names.union(&shap).count();
    Ok(SoftScore::new(inter, union, ScoreMethod::ShapTopK))
}

/// Flag regions whose responsibility exceeds `threshold`.
pub fn mark_regions(
    responsibilities: &[f64],
    threshold: f64,
) -> Result<Vec<bool>, XseiError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(XseiError::BadThreshold(threshold));
    }
    Ok(responsibilities.iter().map(|&r| r > threshold).collect())
}

/// Jaccard agreement between ground-truth regions and occlusion-flagged
/// regions. Errors when both vectors are all-false (score undefined).
pub fn score_regions(
    truth: &GroundTruthRegions,
    flagged: &[bool],
) -> Result<SoftScore, XseiError> {
    if truth.flags.len() != flagged.len() {
        return Err(XseiError::RegionLength {
            a: truth.flags.len(),
            b: flagged.len(),
        });
    }
    let inter = truth
        .flags
        .iter()
        .zip(flagged)
        .filter(|(&a, &b)| a && b)
        .count();
    let union = truth
        .flags
        .iter()
        .zip(flagged)
        .filter(|(&a, &b)| a || b)
        .count();
    if union == 0 {
        return Err(XseiError::DegenerateRegions);
    }
    Ok(SoftScore::new(inter, union, ScoreMethod::Occlusion))
}

// ---------------------------------------------------------------------------
// the evaluation process
// ---------------------------------------------------------------------------

/// One occlusion evaluation unit: noisy realizations of a single
/// underlying explanation window, which all share one ground-truth region
/// grid. Several groups concatenate into one long region vector before
/// Eq. 6 scoring, which pools the Jaccard counts across explanation draws.
#[derive(Debug, Clone, Copy)]
pub struct OcclusionGroup<'a> {
    pub windows: &'a [SignalWindow],
    /// Clean reference underlying the realizations. Its label is the
    /// occluded target class — the maps localize fault-class evidence,
    /// so `Res > 0` marks regions whose masking erodes the model's
    /// belief in the fault.
    pub reference: &'a SignalWindow,
    /// Aligned no-fault counterfactual; required by the `reference`
    /// occlusion baseline, which masks regions with its samples.
    pub counterfactual: Option<&'a SignalWindow>,
    pub truth: &'a GroundTruthRegions,
}

/// Everything the evaluation needs about the data: accuracy surfaces,
/// attribution inputs, and the ground truth.
#[derive(Debug, Clone, Copy)]
pub struct EvalData<'a> {
    pub pool: &'a FeaturePool,
    /// Test split as feature vectors (feature-pool accuracy).
    pub test_features: &'a [FeatureVector],
    /// Test split as signal windows (raw-signal accuracy).
    pub test_windows: &'a [SignalWindow],
    pub test_labels: &'a [usize],
    /// Samples to run Shapley on (typically a seeded test subset).
    pub explain_samples: &'a [FeatureVector],
    /// Background matrix for feature removal.
    pub background: &'a [FeatureVector],
    pub truth_features: &'a GroundTruthFeatures,
    /// Occlusion evaluation groups (raw-signal soft scores).
    pub occlusion_groups: &'a [OcclusionGroup<'a>],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XseiConfig {
    pub removal: RemovalStrategy,
    pub occlusion_baseline: OcclusionBaseline,
    pub region_count: usize,
    pub res_threshold: f64,
    pub top_k: usize,
    pub seed: u64,
}

impl Default for XseiConfig {
    fn default() -> Self {
        XseiConfig {
            removal: RemovalStrategy::Baseline,
            occlusion_baseline: OcclusionBaseline::Blur,
            region_count: 20,
            res_threshold: 0.05,
            top_k: 5,
            seed: 0,
        }
    }
}

/// Everything needed to reproduce a report bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub removal: RemovalStrategy,
    pub occlusion_baseline: OcclusionBaseline,
    pub region_count: usize,
    pub res_threshold: f64,
    pub top_k: usize,
}

/// One model's row in a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub family: ModelFamily,
    pub accuracy: Option<f64>,
    pub score: Option<SoftScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Mean `|phi|` per pool feature (feature-pool models).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shap_summary: Option<Vec<(Feature, f64)>>,
    /// Top-k feature names that entered the score (feature-pool models).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_features: Option<Vec<Feature>>,
    /// Region spans and mean responsibility per region (raw-signal models).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occlusion_series: Option<Vec<(usize, usize, f64)>>,
}

/// Per-model `(accuracy, soft score)` plus reproduction metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XseiReport {
    /// Sample period of the evaluated dataset, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_period_ms: Option<f64>,
    /// Injected noise level of the evaluated dataset, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    pub rows: Vec<ModelReport>,
    pub provenance: Provenance,
}

/// Evaluate every model: accuracy plus the family-appropriate soft score.
/// A model that cannot be evaluated gets its error recorded and the run
/// continues. Fully deterministic given `cfg.seed`.
pub fn soft_evaluate(
    models: &[&TrainedModel],
    data: &EvalData<'_>,
    cfg: &XseiConfig,
) -> XseiReport {
    let rows = models
        .iter()
        .map(|model| {
            let mut row = ModelReport {
                name: model.name().to_string(),
                family: model.family(),
                accuracy: None,
                score: None,
                error: None,
                shap_summary: None,
                top_features: None,
                occlusion_series: None,
            };
            if let Err(e) = evaluate_model(model, data, cfg, &mut row) {
                row.error = Some(e.to_string());
            }
            row
        })
        .collect();

    XseiReport {
        sample_period_ms: None,
        snr_db: None,
        rows,
        provenance: Provenance {
            seed: cfg.seed,
            removal: cfg.removal,
            occlusion_baseline: cfg.occlusion_baseline,
            region_count: cfg.region_count,
            res_threshold: cfg.res_threshold,
            top_k: cfg.top_k,
        },
    }
}

fn evaluate_model(
    model: &TrainedModel,
    data: &EvalData<'_>,
    cfg: &XseiConfig,
    row: &mut ModelReport,
) -> Result<(), XseiError> {
    match model.family() {
        ModelFamily::FeaturePool => {
            row.accuracy = Some(accuracy(
                model,
                EvalSet::Features(data.test_features),
                data.test_labels,
            )?);

            let mut attributions = Vec::with_capacity(data.explain_samples.len());
            for (i, sample) in data.explain_samples.iter().enumerate() {
                let predicted = argmax(&model.predict(ModelInput::Features(sample))?);
                let seed = derive_seed(cfg.seed, &format!("{}/shap/{i}", model.name()));
                attributions.push(explain_features(
                    model,
                    sample,
                    predicted,
                    cfg.removal,
                    data.background,
                    seed,
                )?);
            }
            let top = top_k_features(data.pool, &attributions, cfg.top_k)?;
            row.score = Some(score_feature_pool(data.truth_features, &top)?);
            row.shap_summary = Some(
                data.pool
                    .features()
                    .iter()
                    .copied()
                    .zip(mean_abs_phi(&attributions, data.pool.d()))
                    .collect(),
            );
            row.top_features = Some(top);
        }
        ModelFamily::RawSignal => {
            row.accuracy = Some(accuracy(
                model,
                EvalSet::Windows(data.test_windows),
                data.test_labels,
            )?);

            if data.occlusion_groups.is_empty()
                || data.occlusion_groups.iter().any(|g| g.windows.is_empty())
            {
                return Err(XseiError::Explain(ExplainError::BadRegionCount {
                    n: cfg.region_count,
                    len: 0,
                }));
            }

            // one flag vector per group, pooled into a single Eq. 6 pair
            let mut truth_all = Vec::new();
            let mut flagged_all = Vec::new();
            let mut series = Vec::new();
            for (g, group) in data.occlusion_groups.iter().enumerate() {
                let target = group.reference.label;
                let mut mean_res = vec![0.0f64; cfg.region_count];
                let mut spans: Vec<(usize, usize)> = Vec::new();
                for (i, win) in group.windows.iter().enumerate() {
                    let map = if cfg.occlusion_baseline == OcclusionBaseline::Reference {
                        let counterfactual =
                            group.counterfactual.ok_or(ExplainError::MissingReference)?;
                        occlude_with_reference(
                            model,
                            win,
                            &counterfactual.samples,
                            target,
                            cfg.region_count,
                        )?
                    } else {
                        let seed = derive_seed(
                            cfg.seed,
                            &format!("{}/occlusion/{g}/{i}", model.name()),
                        );
                        occlude(
                            model,
                            win,
                            target,
                            cfg.region_count,
                            cfg.occlusion_baseline,
                            seed,
                        )?
                    };
                    if spans.is_empty() {
                        spans = map.regions.clone();
                    }
                    for (acc, r) in mean_res.iter_mut().zip(&map.responsibilities) {
                        *acc += r;
                    }
                }
                let inv = 1.0 / group.windows.len() as f64;
                for r in &mut mean_res {
                    *r *= inv;
                }

                let flagged = mark_regions(&mean_res, cfg.res_threshold)?;
                if group.truth.flags.len() != flagged.len() {
                    return Err(XseiError::RegionLength {
                        a: group.truth.flags.len(),
                        b: flagged.len(),
                    });
                }
                truth_all.extend_from_slice(&group.truth.flags);
                flagged_all.extend(flagged);
                series.extend(spans.iter().zip(&mean_res).map(|(&(s, e), &r)| (s, e, r)));
            }

            let truth = GroundTruthRegions {
                flags: truth_all,
                derivation: data.occlusion_groups[0].truth.derivation,
            };
            row.score = Some(score_regions(&truth, &flagged_all)?);
            row.occlusion_series = Some(series);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::ShapleyAttribution;

    fn attribution(phi: Vec<f64>) -> ShapleyAttribution {
        ShapleyAttribution {
            phi,
            target_class: 1,
            base_value: 0.0,
        }
    }

    #[test]
    fn mask_mode_flags_covered_regions() {
        // arc mask covering exactly regions 3..=5 of a 10-region grid
        let len = 100usize;
        let mut mask = vec![false; len];
        for flag in mask.iter_mut().take(60).skip(30) {
            *flag = true;
        }
        let gt = ground_truth_regions_from_mask(&mask, len, 10).unwrap();
        let expected: Vec<bool> = (0..10).map(|i| (3..=5).contains(&i)).collect();
        assert_eq!(gt.flags, expected);
    }

    #[test]
    fn pairwise_mode_tracks_the_tolerance() {
        let base: Vec<f64> = (0..50).map(|i| (i as f64 * 0.2).sin()).collect();
        let normal = SignalWindow {
            samples: base.clone(),
            sample_period_ms: 1.0,
            label: 0,
            arc_mask: vec![false; 50],
        };
        // identical pair: nothing flagged
        let same = ground_truth_regions_pairwise(&normal, &normal, 5, 1e-6).unwrap();
        assert!(same.flags.iter().all(|&f| !f));

        // deviation below tolerance everywhere: still nothing flagged
        let mut nudged = normal.clone();
        for v in &mut nudged.samples {
            *v += 1e-9;
        }
        let below = ground_truth_regions_pairwise(&normal, &nudged, 5, 1e-6).unwrap();
        assert!(below.flags.iter().all(|&f| !f));

        // a single sample pushed past the tolerance flags only its region
        let mut arced = normal.clone();
        arced.samples[27] += 0.5;
        let hit = ground_truth_regions_pairwise(&normal, &arced, 5, 1e-6).unwrap();
        assert_eq!(hit.flags, vec![false, false, true, false, false]);
    }

    #[test]
    fn misaligned_pair_is_rejected() {
        let a = SignalWindow {
            samples: vec![0.0; 10],
            sample_period_ms: 1.0,
            label: 0,
            arc_mask: vec![false; 10],
        };
        let b = SignalWindow {
            samples: vec![0.0; 12],
            sample_period_ms: 1.0,
            label: 0,
            arc_mask: vec![false; 12],
        };
        assert!(matches!(
            ground_truth_regions_pairwise(&a, &b, 2, 1e-6),
            Err(XseiError::MisalignedPair { a: 10, b: 12 })
        ));
    }

    #[test]
    fn top_k_ranks_by_mean_absolute_value() {
        let pool = FeaturePool::default_pool();
        // single sample with strictly decreasing |phi|
        let phi: Vec<f64> = (0..12).map(|i| 6.0 - i as f64 * 0.5).collect();
        let top = top_k_features(&pool, &[attribution(phi)], 5).unwrap();
        assert_eq!(&top, &Feature::ALL[..5]);
    }

    #[test]
    fn sign_is_irrelevant_to_ranking() {
        let pool = FeaturePool::default_pool();
        let mut phi = vec![0.0; 12];
        phi[3] = -10.0;
        phi[7] = 9.0;
        let top = top_k_features(&pool, &[attribution(phi)], 1).unwrap();
        assert_eq!(top, vec![Feature::ALL[3]]);
    }

    #[test]
    fn rank_ties_break_to_the_earlier_pool_position() {
        let pool = FeaturePool::new(Feature::GROUND_TRUTH.to_vec()).unwrap();
        // two samples: (2,0,...) and (0,2,...) tie at mean |phi| = 1
        let a = attribution(vec![2.0, 0.0, 0.0, 0.0, 0.0]);
        let b = attribution(vec![0.0, 2.0, 0.0, 0.0, 0.0]);
        let top = top_k_features(&pool, &[a, b], 1).unwrap();
        assert_eq!(top, vec![pool.features()[0]]);
    }

    #[test]
    fn feature_score_is_jaccard() {
        let truth = GroundTruthFeatures::default();
        let exact: Vec<Feature> = Feature::GROUND_TRUTH.to_vec();
        let s = score_feature_pool(&truth, &exact).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!((s.numerator, s.denominator), (5, 5));

        let disjoint = vec![
            Feature::Mean,
            Feature::Skewness,
            Feature::Kurtosis,
            Feature::L1Norm,
            Feature::MaxSlip,
        ];
        let s = score_feature_pool(&truth, &disjoint).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!((s.numerator, s.denominator), (0, 10));

        let four_hits = vec![
            Feature::Variance,
            Feature::Entropy,
            Feature::Range,
            Feature::Rms,
            Feature::MaxSlip,
        ];
        let s = score_feature_pool(&truth, &four_hits).unwrap();
        assert_eq!((s.numerator, s.denominator), (4, 6));
        assert!((s.value - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn attainable_scores_with_k5_are_the_enumerated_set() {
        // every 5-subset of the 12-feature pool must land in the set
        // {0, 1/9, 1/4, 3/7, 2/3, 1}
        let truth = GroundTruthFeatures::default();
        let allowed = [0.0, 1.0 / 9.0, 1.0 / 4.0, 3.0 / 7.0, 2.0 / 3.0, 1.0];
        let all = Feature::ALL;
        let mut seen = BTreeSet::new();
        for a in 0..8 {
            for b in (a + 1)..9 {
                for c in (b + 1)..10 {
                    for d in (c + 1)..11 {
                        for e in (d + 1)..12 {
                            let subset = vec![all[a], all[b], all[c], all[d], all[e]];
                            let s = score_feature_pool(&truth, &subset).unwrap();
                            assert!(
                                allowed.iter().any(|&v| (s.value - v).abs() < 1e-15),
                                "unexpected score {} for {subset:?}",
                                s.value
                            );
                            seen.insert((s.numerator, s.denominator));
                        }
                    }
                }
            }
        }
        assert_eq!(seen.len(), 6, "all six overlap levels should occur");
    }

    #[test]
    fn mark_regions_applies_a_strict_threshold() {
        assert_eq!(
            mark_regions(&[0.0, 0.0, 0.0], 0.1).unwrap(),
            vec![false, false, false]
        );
        assert_eq!(
            mark_regions(&[0.9, 0.05, 0.5], 0.1).unwrap(),
            vec![true, false, true]
        );
        // threshold zero flags every strictly positive responsibility
        assert_eq!(
            mark_regions(&[0.3, 0.0, -0.2], 0.0).unwrap(),
            vec![true, false, false]
        );
        assert!(matches!(
            mark_regions(&[0.5], 1.5),
            Err(XseiError::BadThreshold(_))
        ));
    }

    #[test]
    fn region_score_cases() {
        let truth = GroundTruthRegions {
            flags: vec![true, false, true, false, false],
            derivation: RegionDerivation::Mask,
        };
        let s = score_regions(&truth, &truth.flags.clone()).unwrap();
        assert_eq!(s.value, 1.0);

        let s = score_regions(&truth, &[true, true, false, false, false]).unwrap();
        assert_eq!((s.numerator, s.denominator), (1, 3));
        assert!((s.value - 1.0 / 3.0).abs() < 1e-15);

        let s = score_regions(&truth, &[false; 5]).unwrap();
        assert_eq!(s.value, 0.0);

        let empty = GroundTruthRegions {
            flags: vec![false; 5],
            derivation: RegionDerivation::Mask,
        };
        assert!(matches!(
            score_regions(&empty, &[false; 5]),
            Err(XseiError::DegenerateRegions)
        ));
    }

    #[test]
    fn score_value_matches_ratio_and_bounds() {
        let truth = GroundTruthRegions {
            flags: vec![true, true, false, false],
            derivation: RegionDerivation::Mask,
        };
        for mask in 0..16u32 {
            let flags: Vec<bool> = (0..4).map(|i| mask & (1 << i) != 0).collect();
            match score_regions(&truth, &flags) {
                Ok(s) => {
                    assert!((0.0..=1.0).contains(&s.value));
                    assert_eq!(s.value, s.numerator as f64 / s.denominator as f64);
                    let symmetric = score_regions(
                        &GroundTruthRegions {
                            flags: flags.clone(),
                            derivation: RegionDerivation::Mask,
                        },
                        &truth.flags,
                    )
                    .unwrap();
                    assert_eq!(s.value, symmetric.value);
                }
                Err(XseiError::DegenerateRegions) => assert_eq!(mask, 0),
                Err(other) => panic!("unexpected error {other:?}"),
            }
        }
    }
}
