//! Model-agnostic attribution.
//!
//! Feature-pool models are explained with exact Shapley values over
//! feature coalitions: a coalition game evaluates the model with
//! out-of-coalition features removed by one of three strategies (baseline
//! column means, one sampled background row, or averaging over the
//! background marginal), and each feature's value is the factorially
//! weighted mean of its marginal contributions over all `2^d` coalitions.
//! Raw-signal models are explained by occlusion: replace each region with a
//! baseline and record the relative drop in target-class probability,
//! `Res = 1 - p(masked) / p(original)`.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeaturePool, FeatureVector};
use crate::models::{ModelError, ModelFamily, ModelInput, TrainedModel};
use crate::seed::{derive_seed, rng_for, rng_from};
use crate::signal::SignalWindow;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Exact enumeration walks all `2^d` coalitions; beyond this use sampling.
pub const MAX_EXACT_FEATURES: usize = 15;
/// Hard cap on game size (the memo table is dense in `2^d`).
pub const MAX_GAME_FEATURES: usize = 20;
/// Marginal removal averages over at most this many background rows.
pub const MARGINAL_BACKGROUND_CAP: usize = 128;
/// Width of the centered moving average behind the blur baseline.
pub const BLUR_WIDTH: usize = 9;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("exact Shapley limited to {max} features, game has {d}; use sampling")]
    TooManyForExact { d: usize, max: usize },
    #[error("game size {d} exceeds the supported maximum {max}")]
    TooManyFeatures { d: usize, max: usize },
    #[error("game must have at least one feature")]
    EmptyGame,
    #[error("feature index {index} out of range for {d} features")]
    BadFeatureIndex { index: usize, d: usize },
    #[error("need at least one permutation")]
    ZeroPermutations,
    #[error("background set is empty")]
    EmptyBackground,
    #[error("background row dimension {got} does not match sample dimension {expected}")]
    BackgroundDimension { expected: usize, got: usize },
    #[error("target class {target} outside {classes} model classes")]
    BadTargetClass { target: usize, classes: usize },
    #[error("model family must be {expected} for this attribution")]
    WrongFamily { expected: ModelFamily },
    #[error("region count {n} invalid for window length {len}")]
    BadRegionCount { n: usize, len: usize },
    #[error("target-class probability is zero; responsibility is undefined")]
    ZeroProbability,
    #[error("the reference baseline needs an aligned counterfactual recording")]
    MissingReference,
    #[error("counterfactual length {got} does not match window length {expected}")]
    ReferenceLength { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// How out-of-coalition features are filled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalStrategy {
    /// Replace with the background column means.
    Baseline,
    /// Replace with one seeded background row.
    RandomSample,
    /// Average model output over the background rows (capped, seeded).
    Marginal,
}

impl std::fmt::Display for RemovalStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RemovalStrategy::Baseline => f.write_str("baseline"),
            RemovalStrategy::RandomSample => f.write_str("random"),
            RemovalStrategy::Marginal => f.write_str("marginal"),
        }
    }
}

/// A set function over feature coalitions with a dense memo table.
/// Coalitions are bitmasks: bit `i` set means feature `i` keeps the
/// explained sample's value.
pub struct CoalitionGame<'a> {
    d: usize,
    evaluator: Box<dyn Fn(u32) -> f64 + 'a>,
    memo: RefCell<Vec<Option<f64>>>,
}

impl<'a> CoalitionGame<'a> {
    pub fn from_fn(d: usize, evaluator: impl Fn(u32) -> f64 + 'a) -> Result<Self, ExplainError> {
        if d == 0 {
            return Err(ExplainError::EmptyGame);
        }
        if d > MAX_GAME_FEATURES {
            return Err(ExplainError::TooManyFeatures {
                d,
                max: MAX_GAME_FEATURES,
            });
        }
        Ok(CoalitionGame {
            d,
            evaluator: Box::new(evaluator),
            memo: RefCell::new(vec![None; 1usize << d]),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn full_mask(&self) -> u32 {
        ((1usize << self.d) - 1) as u32
    }

    /// Memoized evaluation; each distinct coalition costs one model call.
    pub fn evaluate(&self, mask: u32) -> f64 {
        debug_assert!(mask <= self.full_mask());
        if let Some(v) = self.memo.borrow()[mask as usize] {
            return v;
        }
        let v = (self.evaluator)(mask);
        self.memo.borrow_mut()[mask as usize] = Some(v);
        v
    }
}

/// Shapley values of every feature for one explained sample and target
/// class. Efficiency holds by construction: the values sum to
/// `G(full) - G(empty)` up to float error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapleyAttribution {
    pub phi: Vec<f64>,
    pub target_class: usize,
    /// `G(empty)`: the model output with every feature removed.
    pub base_value: f64,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Exact Shapley value of feature `i` by full enumeration.
pub fn shapley_exact(game: &CoalitionGame<'_>, i: usize) -> Result<f64, ExplainError> {
    let d = game.d();
    if d > MAX_EXACT_FEATURES {
        return Err(ExplainError::TooManyForExact {
            d,
            max: MAX_EXACT_FEATURES,
        });
    }
    if i >= d {
        return Err(ExplainError::BadFeatureIndex { index: i, d });
    }
    let d_fact = factorial(d);
    let weights: Vec<f64> = (0..d)
        .map(|s| factorial(s) * factorial(d - s - 1) / d_fact)
        .collect();

    let bit = 1u32 << i;
    let mut phi = 0.0;
    for mask in 0..(1u32 << d) {
        if mask & bit != 0 {
            continue;
        }
        let s = mask.count_ones() as usize;
        phi += weights[s] * (game.evaluate(mask | bit) - game.evaluate(mask));
    }
    Ok(phi)
}

/// Exact Shapley values for every feature, sharing one memo sweep.
pub fn shapley_exact_all(game: &CoalitionGame<'_>) -> Result<Vec<f64>, ExplainError> {
    (0..game.d()).map(|i| shapley_exact(game, i)).collect()
}

/// Permutation-sampling estimate of feature `i`'s Shapley value.
///
/// Unbiased and deterministic given the seed. When the request covers
/// every ordering of a small game (`d <= 8` and `num_permutations >= d!`),
/// the estimator enumerates all `d!` permutations exactly once and thus
/// returns the exact value.
pub fn shapley_sampled(
    game: &CoalitionGame<'_>,
    i: usize,
    num_permutations: usize,
    seed: u64,
) -> Result<f64, ExplainError> {
    let d = game.d();
    if i >= d {
        return Err(ExplainError::BadFeatureIndex { index: i, d });
    }
    if num_permutations == 0 {
        return Err(ExplainError::ZeroPermutations);
    }
    let bit = 1u32 << i;

    let d_fact: Option<usize> = (d <= 8).then(|| (1..=d).product());
    if let Some(total) = d_fact {
        if num_permutations >= total {
            // exhaustive: average the marginal over all orderings
            let mut order: Vec<usize> = (0..d).collect();
            let mut sum = 0.0;
            let mut count = 0usize;
            permute_all(&mut order, 0, &mut |perm| {
                let mut pred = 0u32;
                for &p in perm {
                    if p == i {
                        break;
                    }
                    pred |= 1 << p;
                }
                sum += game.evaluate(pred | bit) - game.evaluate(pred);
                count += 1;
            });
            debug_assert_eq!(count, total);
            return Ok(sum / total as f64);
        }
    }

    let mut rng = rng_from(seed);
    let mut order: Vec<usize> = (0..d).collect();
    let mut sum = 0.0;
    for _ in 0..num_permutations {
        order.shuffle(&mut rng);
        let mut pred = 0u32;
        for &p in &order {
            if p == i {
                break;
            }
            pred |= 1 << p;
        }
        sum += game.evaluate(pred | bit) - game.evaluate(pred);
    }
    Ok(sum / num_permutations as f64)
}

fn permute_all(order: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == order.len() {
        visit(order);
        return;
    }
    for j in k..order.len() {
        order.swap(k, j);
        permute_all(order, k + 1, visit);
        order.swap(k, j);
    }
}

/// Build the coalition game for one `(model, sample, target class)` triple.
///
/// `G(mask)` is the model's target-class probability with in-coalition
/// features holding the sample's values and the rest removed per
/// `removal`. The background matrix supplies the removal values; marginal
/// removal averages over at most [`MARGINAL_BACKGROUND_CAP`] seeded rows.
pub fn make_game<'a>(
    model: &'a TrainedModel,
    sample: &'a FeatureVector,
    target_class: usize,
    removal: RemovalStrategy,
    background: &'a [FeatureVector],
    seed: u64,
) -> Result<CoalitionGame<'a>, ExplainError> {
    if model.family() != ModelFamily::FeaturePool {
        return Err(ExplainError::WrongFamily {
            expected: ModelFamily::FeaturePool,
        });
    }
    let classes = model.num_classes();
    if target_class >= classes {
        return Err(ExplainError::BadTargetClass {
            target: target_class,
            classes,
        });
    }
    if background.is_empty() {
        return Err(ExplainError::EmptyBackground);
    }
    let d = sample.len();
    if let Some(bad) = background.iter().find(|r| r.len() != d) {
        return Err(ExplainError::BackgroundDimension {
            expected: d,
            got: bad.len(),
        });
    }

    let features = sample.features().to_vec();
    let sample_values = sample.values().to_vec();
    let predict_one = move |model: &TrainedModel, values: Vec<f64>| -> f64 {
        let vec = FeatureVector::from_parts(features.clone(), values);
        model
            .predict(ModelInput::Features(&vec))
            .map(|p| p[target_class])
            .unwrap_or(f64::NAN)
    };

    match removal {
        RemovalStrategy::Baseline => {
            let mut means = vec![0.0f64; d];
            for row in background {
                for (m, &v) in means.iter_mut().zip(row.values()) {
                    *m += v;
                }
            }
            let inv = 1.0 / background.len() as f64;
            for m in &mut means {
                *m *= inv;
            }
            CoalitionGame::from_fn(d, move |mask| {
                let values: Vec<f64> = (0..d)
                    .map(|j| {
                        if mask & (1 << j) != 0 {
                            sample_values[j]
                        } else {
                            means[j]
                        }
                    })
                    .collect();
                predict_one(model, values)
            })
        }
        RemovalStrategy::RandomSample => {
            let pick = rng_from(seed).random_range(0..background.len());
            let row = background[pick].values().to_vec();
            CoalitionGame::from_fn(d, move |mask| {
                let values: Vec<f64> = (0..d)
                    .map(|j| {
                        if mask & (1 << j) != 0 {
                            sample_values[j]
                        } else {
                            row[j]
                        }
                    })
                    .collect();
                predict_one(model, values)
            })
        }
        RemovalStrategy::Marginal => {
            let rows: Vec<Vec<f64>> = if background.len() > MARGINAL_BACKGROUND_CAP {
                let mut indices: Vec<usize> = (0..background.len()).collect();
                let mut rng = rng_from(seed);
                for i in 0..MARGINAL_BACKGROUND_CAP {
                    let j = rng.random_range(i..indices.len());
                    indices.swap(i, j);
                }
                indices
                    .into_iter()
                    .take(MARGINAL_BACKGROUND_CAP)
                    .map(|i| background[i].values().to_vec())
                    .collect()
            } else {
                background.iter().map(|r| r.values().to_vec()).collect()
            };
            CoalitionGame::from_fn(d, move |mask| {
                let mut acc = 0.0;
                for row in &rows {
                    let values: Vec<f64> = (0..d)
                        .map(|j| {
                            if mask & (1 << j) != 0 {
                                sample_values[j]
                            } else {
                                row[j]
                            }
                        })
                        .collect();
                    acc += predict_one(model, values);
                }
                acc / rows.len() as f64
            })
        }
    }
}

/// Exact Shapley attribution of one sample: build the game, enumerate, and
/// package the result with its base value.
pub fn explain_features(
    model: &TrainedModel,
    sample: &FeatureVector,
    target_class: usize,
    removal: RemovalStrategy,
    background: &[FeatureVector],
    seed: u64,
) -> Result<ShapleyAttribution, ExplainError> {
    let game = make_game(model, sample, target_class, removal, background, seed)?;
    let phi = shapley_exact_all(&game)?;
    let base_value = game.evaluate(0);
    Ok(ShapleyAttribution {
        phi,
        target_class,
        base_value,
    })
}

// ---------------------------------------------------------------------------
// occlusion sensitivity
// ---------------------------------------------------------------------------

/// What masked samples are replaced with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionBaseline {
    /// Centered moving average of width [`BLUR_WIDTH`].
    Blur,
    /// Zero current.
    Constant,
    /// Seeded Gaussian noise at the window's RMS.
    Noise,
    /// Samples from an aligned no-fault counterfactual recording; the only
    /// mask that removes fault evidence without inserting masking
    /// artifacts of its own. Needs [`occlude_with_reference`].
    Reference,
}

impl std::fmt::Display for OcclusionBaseline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OcclusionBaseline::Blur => f.write_str("blur"),
            OcclusionBaseline::Constant => f.write_str("constant"),
            OcclusionBaseline::Noise => f.write_str("noise"),
            OcclusionBaseline::Reference => f.write_str("reference"),
        }
    }
}

/// Per-region responsibilities for one window and target class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OcclusionMap {
    /// Half-open `[start, end)` spans partitioning the window.
    pub regions: Vec<(usize, usize)>,
    pub responsibilities: Vec<f64>,
    pub baseline: OcclusionBaseline,
    pub target_class: usize,
}

/// Split `len` samples into `n` contiguous spans with sizes differing by
/// at most one. Shared by occlusion and the region ground truth so both
/// always agree on the grid.
pub fn region_spans(len: usize, n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i * len / n, (i + 1) * len / n)).collect()
}

/// `Res = 1 - p_masked / p_original`.
#[inline]
pub fn responsibility(p_masked: f64, p_original: f64) -> f64 {
    1.0 - p_masked / p_original
}

/// Occlusion sensitivity of a raw-signal model on one window: mask each of
/// `n` equal regions with the baseline and measure the relative drop of
/// the target-class probability.
pub fn occlude(
    model: &TrainedModel,
    win: &SignalWindow,
    target_class: usize,
    n: usize,
    baseline: OcclusionBaseline,
    seed: u64,
) -> Result<OcclusionMap, ExplainError> {
    if model.family() != ModelFamily::RawSignal {
        return Err(ExplainError::WrongFamily {
            expected: ModelFamily::RawSignal,
        });
    }
    let classes = model.num_classes();
    if target_class >= classes {
        return Err(ExplainError::BadTargetClass {
            target: target_class,
            classes,
        });
    }
    if n == 0 || n > win.len() {
        return Err(ExplainError::BadRegionCount { n, len: win.len() });
    }

    if baseline == OcclusionBaseline::Reference {
        return Err(ExplainError::MissingReference);
    }
    let p_original = model.predict(ModelInput::Window(win))?[target_class];
    if p_original <= 0.0 {
        return Err(ExplainError::ZeroProbability);
    }

    let blurred = match baseline {
        OcclusionBaseline::Blur => Some(moving_average(&win.samples, BLUR_WIDTH)),
        _ => None,
    };
    let rms = win.rms();

    let regions = region_spans(win.len(), n);
    let mut responsibilities = Vec::with_capacity(n);
    for (index, &(start, end)) in regions.iter().enumerate() {
        let mut masked = win.clone();
        match baseline {
            OcclusionBaseline::Constant => {
                masked.samples[start..end].fill(0.0);
            }
            OcclusionBaseline::Blur => {
                let blur = blurred.as_ref().expect("computed above");
                masked.samples[start..end].copy_from_slice(&blur[start..end]);
            }
            OcclusionBaseline::Noise => {
                let mut rng = rng_for(derive_seed(seed, "occlusion"), &format!("region/{index}"));
                let normal = Normal::new(0.0, rms).expect("finite rms");
                for v in &mut masked.samples[start..end] {
                    *v = normal.sample(&mut rng);
                }
            }
            OcclusionBaseline::Reference => unreachable!("handled above"),
        }
        let p_masked = model.predict(ModelInput::Window(&masked))?[target_class];
        responsibilities.push(responsibility(p_masked, p_original));
    }

    Ok(OcclusionMap {
        regions,
        responsibilities,
        baseline,
        target_class,
    })
}

/// Occlusion with a counterfactual reference: masked regions take the
/// aligned no-fault recording's samples. Fully deterministic.
pub fn occlude_with_reference(
    model: &TrainedModel,
    win: &SignalWindow,
    reference: &[f64],
    target_class: usize,
    n: usize,
) -> Result<OcclusionMap, ExplainError> {
    if model.family() != ModelFamily::RawSignal {
        return Err(ExplainError::WrongFamily {
            expected: ModelFamily::RawSignal,
        });
    }
    let classes = model.num_classes();
    if target_class >= classes {
        return Err(ExplainError::BadTargetClass {
            target: target_class,
            classes,
        });
    }
    if n == 0 || n > win.len() {
        return Err(ExplainError::BadRegionCount { n, len: win.len() });
    }
    if reference.len() != win.len() {
        return Err(ExplainError::ReferenceLength {
            expected: win.len(),
            got: reference.len(),
        });
    }
    let p_original = model.predict(ModelInput::Window(win))?[target_class];
    if p_original <= 0.0 {
        return Err(ExplainError::ZeroProbability);
    }

    let regions = region_spans(win.len(), n);
    let mut responsibilities = Vec::with_capacity(n);
    for &(start, end) in &regions {
        let mut masked = win.clone();
        masked.samples[start..end].copy_from_slice(&reference[start..end]);
        let p_masked = model.predict(ModelInput::Window(&masked))?[target_class];
        responsibilities.push(responsibility(p_masked, p_original));
    }

    Ok(OcclusionMap {
        regions,
        responsibilities,
        baseline: OcclusionBaseline::Reference,
        target_class,
    })
}

/// Centered moving average with shrinking windows at the edges.
fn moving_average(samples: &[f64], width: usize) -> Vec<f64> {
    let radius = width / 2;
    let n = samples.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(n);
            samples[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

// ---------------------------------------------------------------------------
// exports
// ---------------------------------------------------------------------------

/// Attribution CSV: `feature_name,phi`, one row per pool feature.
pub fn write_attribution_csv(
    path: &std::path::Path,
    pool: &FeaturePool,
    attribution: &ShapleyAttribution,
) -> Result<(), ExplainError> {
    let mut out = String::from("feature_name,phi\n");
    for (f, phi) in pool.features().iter().zip(&attribution.phi) {
        out.push_str(&format!("{},{}\n", f.name(), phi));
    }
    std::fs::write(path, out.as_bytes()).map_err(|source| ExplainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Occlusion CSV: `region_start,region_end,res`, one row per region.
pub fn write_occlusion_csv(path: &std::path::Path, map: &OcclusionMap) -> Result<(), ExplainError> {
    let mut out = String::from("region_start,region_end,res\n");
    for (&(start, end), res) in map.regions.iter().zip(&map.responsibilities) {
        out.push_str(&format!("{start},{end},{res}\n"));
    }
    std::fs::write(path, out.as_bytes()).map_err(|source| ExplainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract, FeaturePool};
    use crate::models::{fit_knn, ModelDescriptor, ModelKind, TrainedModel};
    use crate::nncore::{Activation, LayerSpec, Network};
    use std::collections::BTreeMap;

    /// Independent oracle: average marginal contribution over all `d!`
    /// permutations, written directly from the definition.
    pub(crate) fn shapley_permutation_oracle(game: &CoalitionGame<'_>, i: usize) -> f64 {
        let d = game.d();
        let mut order: Vec<usize> = (0..d).collect();
        let mut sum = 0.0;
        let mut count = 0usize;
        permute_all(&mut order, 0, &mut |perm| {
            let mut pred = 0u32;
            for &p in perm {
                if p == i {
                    break;
                }
                pred |= 1 << p;
            }
            sum += game.evaluate(pred | (1 << i)) - game.evaluate(pred);
            count += 1;
        });
        sum / count as f64
    }

    #[test]
    fn two_player_game_by_hand() {
        // G({}) = 0, G({0}) = 1, G({1}) = 2, G({0,1}) = 4
        let game = CoalitionGame::from_fn(2, |mask| match mask {
            0b00 => 0.0,
            0b01 => 1.0,
            0b10 => 2.0,
            0b11 => 4.0,
            _ => unreachable!(),
        })
        .unwrap();
        assert!((shapley_exact(&game, 0).unwrap() - 1.5).abs() < 1e-12);
        assert!((shapley_exact(&game, 1).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn dummy_feature_gets_zero() {
        // feature 2 never changes the value
        let game =
            CoalitionGame::from_fn(3, |mask| f64::from((mask & 0b011).count_ones())).unwrap();
        assert_eq!(shapley_exact(&game, 2).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_features_share_credit() {
        // features 0 and 1 are interchangeable
        let game = CoalitionGame::from_fn(3, |mask| {
            let pair = f64::from((mask & 0b011).count_ones());
            let solo = f64::from((mask >> 2) & 1) * 0.5;
            pair * pair + solo
        })
        .unwrap();
        let phi0 = shapley_exact(&game, 0).unwrap();
        let phi1 = shapley_exact(&game, 1).unwrap();
        assert!((phi0 - phi1).abs() < 1e-12);
    }

    #[test]
    fn efficiency_and_oracle_agreement_on_random_games() {
        for d in 2..=6usize {
            for trial in 0..5u64 {
                let mut rng = rng_from(d as u64 * 1000 + trial);
                let table: Vec<f64> = (0..(1usize << d)).map(|_| rng.random::<f64>()).collect();
                let game = CoalitionGame::from_fn(d, move |mask| table[mask as usize]).unwrap();
                let phi = shapley_exact_all(&game).unwrap();
                let total: f64 = phi.iter().sum();
                let expected = game.evaluate(game.full_mask()) - game.evaluate(0);
                assert!((total - expected).abs() < 1e-9, "efficiency violated");
                for i in 0..d {
                    let oracle = shapley_permutation_oracle(&game, i);
                    assert!((phi[i] - oracle).abs() < 1e-9, "d={d} i={i}");
                }
            }
        }
    }

    #[test]
    fn linearity_of_the_exact_engine() {
        let d = 5usize;
        let mut rng = rng_from(99);
        let t1: Vec<f64> = (0..(1usize << d)).map(|_| rng.random::<f64>()).collect();
        let t2: Vec<f64> = (0..(1usize << d)).map(|_| rng.random::<f64>()).collect();
        let (alpha, beta) = (2.5, -0.75);

        let t1c = t1.clone();
        let g1 = CoalitionGame::from_fn(d, move |m| t1c[m as usize]).unwrap();
        let t2c = t2.clone();
        let g2 = CoalitionGame::from_fn(d, move |m| t2c[m as usize]).unwrap();
        let combo = CoalitionGame::from_fn(d, move |m| {
            alpha * t1[m as usize] + beta * t2[m as usize]
        })
        .unwrap();

        let p1 = shapley_exact_all(&g1).unwrap();
        let p2 = shapley_exact_all(&g2).unwrap();
        let pc = shapley_exact_all(&combo).unwrap();
        for i in 0..d {
            assert!((pc[i] - (alpha * p1[i] + beta * p2[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_covers_all_orderings_exactly() {
        let game = CoalitionGame::from_fn(3, |mask| {
            f64::from(mask.count_ones()).powi(2) + f64::from(mask & 1)
        })
        .unwrap();
        for i in 0..3 {
            let exact = shapley_exact(&game, i).unwrap();
            let sampled = shapley_sampled(&game, i, 6, 1234).unwrap();
            assert_eq!(sampled, exact);
        }
    }

    #[test]
    fn sampling_is_unbiased_within_three_standard_errors() {
        let d = 6usize;
        let mut rng = rng_from(0xfeed);
        let table: Vec<f64> = (0..(1usize << d)).map(|_| rng.random::<f64>()).collect();
        let game = CoalitionGame::from_fn(d, move |m| table[m as usize]).unwrap();
        let exact = shapley_exact(&game, 2).unwrap();

        let estimates: Vec<f64> = (0..50)
            .map(|s| shapley_sampled(&game, 2, 200, s).unwrap())
            .collect();
        let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
            / (estimates.len() - 1) as f64;
        let se = (var / estimates.len() as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * se.max(1e-12),
            "mean {mean}, exact {exact}, se {se}"
        );
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let game = CoalitionGame::from_fn(6, |mask| f64::from(mask.count_ones())).unwrap();
        let a = shapley_sampled(&game, 1, 37, 5).unwrap();
        let b = shapley_sampled(&game, 1, 37, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_mode_rejects_oversized_games() {
        let game = CoalitionGame::from_fn(16, |_| 0.0).unwrap();
        assert!(matches!(
            shapley_exact(&game, 0),
            Err(ExplainError::TooManyForExact { d: 16, .. })
        ));
    }

    // -- game construction over real models --------------------------------

    fn fitted_model_and_data() -> (TrainedModel, Vec<FeatureVector>) {
        let pool = FeaturePool::default_pool();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..12 {
            let label = i % 2;
            let amp = if label == 0 { 1.0 } else { 4.0 };
            let samples: Vec<f64> = (0..64)
                .map(|j| amp * (2.0 * std::f64::consts::PI * j as f64 / 16.0).sin())
                .collect();
            let win = SignalWindow {
                samples,
                sample_period_ms: 1.0,
                label,
                arc_mask: vec![false; 64],
            };
            xs.push(extract(&win, &pool).unwrap());
            ys.push(label);
        }
        (fit_knn(&xs, &ys, 3).unwrap(), xs)
    }

    #[test]
    fn full_coalition_reproduces_the_prediction() {
        let (model, xs) = fitted_model_and_data();
        let sample = &xs[0];
        for removal in [
            RemovalStrategy::Baseline,
            RemovalStrategy::RandomSample,
            RemovalStrategy::Marginal,
        ] {
            let game = make_game(&model, sample, 1, removal, &xs, 7).unwrap();
            let direct = model.predict(ModelInput::Features(sample)).unwrap()[1];
            assert_eq!(game.evaluate(game.full_mask()), direct, "{removal}");
        }
    }

    #[test]
    fn baseline_empty_coalition_is_the_all_means_prediction() {
        let (model, xs) = fitted_model_and_data();
        let game = make_game(&model, &xs[0], 1, RemovalStrategy::Baseline, &xs, 0).unwrap();
        let d = xs[0].len();
        let mut means = vec![0.0; d];
        for row in &xs {
            for (m, &v) in means.iter_mut().zip(row.values()) {
                *m += v;
            }
        }
        // bit-identical mean construction: the centroid is a near-tie point
        // for k-NN, so the comparison must share every rounding step
        let inv = 1.0 / xs.len() as f64;
        for m in &mut means {
            *m *= inv;
        }
        let mean_vec = FeatureVector::from_parts(xs[0].features().to_vec(), means);
        let expected = model.predict(ModelInput::Features(&mean_vec)).unwrap()[1];
        assert_eq!(game.evaluate(0), expected);
    }

    #[test]
    fn marginal_with_single_row_equals_random_sample() {
        let (model, xs) = fitted_model_and_data();
        let background = vec![xs[3].clone()];
        let ga = make_game(&model, &xs[0], 1, RemovalStrategy::Marginal, &background, 5).unwrap();
        let gb =
            make_game(&model, &xs[0], 1, RemovalStrategy::RandomSample, &background, 5).unwrap();
        for mask in 0..(1u32 << xs[0].len()).min(64) {
            assert_eq!(ga.evaluate(mask), gb.evaluate(mask));
        }
    }

    #[test]
    fn empty_background_is_rejected() {
        let (model, xs) = fitted_model_and_data();
        assert!(matches!(
            make_game(&model, &xs[0], 1, RemovalStrategy::Baseline, &[], 0),
            Err(ExplainError::EmptyBackground)
        ));
    }

    // -- occlusion ----------------------------------------------------------

    /// Raw-signal model with hand-picked dense weight rows for limit cases.
    fn window_model_rows(rows: &[Vec<f64>], len: usize) -> TrainedModel {
        let classes = rows.len();
        let mut net = Network::new(
            1,
            len,
            vec![LayerSpec::Dense {
                out_units: classes,
                activation: Activation::Softmax,
            }],
            0,
        )
        .unwrap();
        let params = net.params_mut();
        for p in params.iter_mut() {
            *p = 0.0;
        }
        for (c, row) in rows.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                params[c * len + j] = *w;
            }
        }
        let kind = ModelKind::Lbnn(crate::models::LbnnModel::from_bytes(&{
            let mut bytes = vec![0u8]; // avg-pool variant tag
            bytes.extend(crate::nncore::checkpoint::to_bytes(&net).unwrap());
            bytes
        })
        .unwrap());
        TrainedModel {
            descriptor: ModelDescriptor {
                name: "window-probe".to_string(),
                family: ModelFamily::RawSignal,
                hyperparams: BTreeMap::new(),
                seed: 0,
                warning: None,
            },
            kind,
        }
    }

    /// Two-class probe: class 0 is the zero row, class 1 takes `weights`.
    fn window_model(weights_row1: Vec<f64>, len: usize) -> TrainedModel {
        window_model_rows(&[vec![0.0; len], weights_row1], len)
    }

    fn unit_window(len: usize) -> SignalWindow {
        SignalWindow {
            samples: vec![1.0; len],
            sample_period_ms: 1.0,
            label: 1,
            arc_mask: vec![true; len],
        }
    }

    fn ramp_window(len: usize) -> SignalWindow {
        SignalWindow {
            samples: (0..len).map(|i| i as f64).collect(),
            sample_period_ms: 1.0,
            label: 1,
            arc_mask: vec![true; len],
        }
    }

    #[test]
    fn no_op_masking_gives_zero_responsibility() {
        // all-zero weights: the prediction ignores the samples entirely
        let model = window_model(vec![0.0; 8], 8);
        let map = occlude(&model, &unit_window(8), 1, 4, OcclusionBaseline::Constant, 0).unwrap();
        assert_eq!(map.responsibilities, vec![0.0; 4]);
    }

    #[test]
    fn probability_collapse_gives_responsibility_one() {
        // The constant window standardizes to zeros, so the logits tie at
        // p = 0.5. Zero-masking region {0} leaves [0, 1], which
        // standardizes to [-1, 1] and drives logit 1 to -2000: the
        // probability underflows to an exact 0.0 and Res to an exact 1.0.
        let model = window_model(vec![1000.0, -1000.0], 2);
        let map = occlude(&model, &unit_window(2), 1, 2, OcclusionBaseline::Constant, 0).unwrap();
        assert_eq!(map.responsibilities[0], 1.0);
    }

    #[test]
    fn responsibility_arithmetic() {
        assert_eq!(responsibility(0.2, 0.8), 0.75);
        assert_eq!(responsibility(0.8, 0.8), 0.0);
        assert_eq!(responsibility(0.0, 0.8), 1.0);
    }

    #[test]
    fn regions_partition_the_window() {
        for (len, n) in [(2000usize, 20usize), (17, 5), (10, 10), (7, 3)] {
            let spans = region_spans(len, n);
            assert_eq!(spans.len(), n);
            assert_eq!(spans[0].0, 0);
            assert_eq!(spans[n - 1].1, len);
            for w in spans.windows(2) {
                assert_eq!(w[0].1, w[1].0);
            }
            let sizes: Vec<usize> = spans.iter().map(|(s, e)| e - s).collect();
            let min = sizes.iter().min().unwrap();
            let max = sizes.iter().max().unwrap();
            assert!(max - min <= 1);
        }
    }

    #[test]
    fn occlusion_ignores_other_class_relabeling() {
        // permuting the non-target classes (rows 0 and 2 swap) leaves the
        // target-class probability, and therefore every Res, unchanged
        let row_a = vec![0.4, -0.2, 0.1, 0.0, 0.3, -0.5, 0.2, 0.1];
        let row_b = vec![-0.3, 0.6, 0.0, 0.2, -0.1, 0.4, -0.2, 0.5];
        let target = vec![0.7, 0.1, -0.4, 0.3, 0.0, -0.2, 0.6, -0.1];
        let m1 = window_model_rows(&[row_a.clone(), target.clone(), row_b.clone()], 8);
        let m2 = window_model_rows(&[row_b, target, row_a], 8);
        let win = ramp_window(8);
        let a = occlude(&m1, &win, 1, 4, OcclusionBaseline::Blur, 3).unwrap();
        let b = occlude(&m2, &win, 1, 4, OcclusionBaseline::Blur, 3).unwrap();
        assert!(a.responsibilities.iter().any(|&r| r != 0.0));
        // row permutation reorders the softmax sum, so match to float noise
        for (x, y) in a.responsibilities.iter().zip(&b.responsibilities) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn zero_probability_is_rejected() {
        // the ramp's first standardized sample is strongly negative, so a
        // huge positive weight there underflows class 1 to an exact zero
        let mut weights = vec![0.0; 8];
        weights[0] = 2000.0;
        let model = window_model(weights, 8);
        assert!(matches!(
            occlude(&model, &ramp_window(8), 1, 4, OcclusionBaseline::Constant, 0),
            Err(ExplainError::ZeroProbability)
        ));
    }

    #[test]
    fn bad_region_counts_are_rejected() {
        let model = window_model(vec![0.0; 8], 8);
        let win = unit_window(8);
        assert!(matches!(
            occlude(&model, &win, 1, 0, OcclusionBaseline::Constant, 0),
            Err(ExplainError::BadRegionCount { .. })
        ));
        assert!(matches!(
            occlude(&model, &win, 1, 9, OcclusionBaseline::Constant, 0),
            Err(ExplainError::BadRegionCount { .. })
        ));
    }

    #[test]
    fn noise_baseline_is_seeded() {
        let model = window_model(vec![0.3, 0.1, -0.2, 0.4, 0.0, 0.2, -0.1, 0.5], 8);
        let win = unit_window(8);
        let a = occlude(&model, &win, 1, 4, OcclusionBaseline::Noise, 11).unwrap();
        let b = occlude(&model, &win, 1, 4, OcclusionBaseline::Noise, 11).unwrap();
        let c = occlude(&model, &win, 1, 4, OcclusionBaseline::Noise, 12).unwrap();
        assert_eq!(a.responsibilities, b.responsibilities);
        assert_ne!(a.responsibilities, c.responsibilities);
    }
}
