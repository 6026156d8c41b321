//! Statistical feature pool extracted from signal windows.
//!
//! The pool feeds both the feature-pool classifiers and the Shapley
//! attribution, so its ordering is part of the contract: the vector layout
//! always equals the pool layout. Five of the features — variance, entropy,
//! range, RMS, integral — double as the ground-truth set the soft scores
//! compare against.
//!
//! Definitions the pool pins down (the underlying literature names these
//! features without formulas, so the choices are documented here):
//! entropy is Shannon entropy in bits of a 64-bin amplitude histogram over
//! `[min, max]`; kurtosis is Pearson (non-excess) `m4 / m2^2`; the zero
//! current period counts samples with `|x| < 0.05 * max|x|`; max slip is
//! the largest one-step absolute difference.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::SignalWindow;

/// Number of amplitude histogram bins behind the entropy feature.
pub const ENTROPY_BINS: usize = 64;
/// Relative threshold defining the zero-current region.
pub const ZERO_CURRENT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("window too short: need at least 2 samples, got {0}")]
    WindowTooShort(usize),
    #[error("feature pool must contain every ground-truth feature; missing {0}")]
    MissingGroundTruth(Feature),
    #[error("feature pool size {0} outside supported range 5..=15")]
    BadPoolSize(usize),
    #[error("feature pool contains duplicate entry {0}")]
    DuplicateFeature(Feature),
    #[error("unknown feature name `{0}`")]
    UnknownFeature(String),
}

/// Every feature the toolkit can compute, in canonical pool order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Mean,
    Variance,
    Range,
    Rms,
    Integral,
    Entropy,
    Skewness,
    Kurtosis,
    L1Norm,
    L2Norm,
    ZeroCurrentPeriod,
    MaxSlip,
}

impl Feature {
    pub const ALL: [Feature; 12] = [
        Feature::Mean,
        Feature::Variance,
        Feature::Range,
        Feature::Rms,
        Feature::Integral,
        Feature::Entropy,
        Feature::Skewness,
        Feature::Kurtosis,
        Feature::L1Norm,
        Feature::L2Norm,
        Feature::ZeroCurrentPeriod,
        Feature::MaxSlip,
    ];

    /// The five ground-truth arc indicators.
    pub const GROUND_TRUTH: [Feature; 5] = [
        Feature::Variance,
        Feature::Entropy,
        Feature::Range,
        Feature::Rms,
        Feature::Integral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Mean => "mean",
            Feature::Variance => "variance",
            Feature::Range => "range",
            Feature::Rms => "rms",
            Feature::Integral => "integral",
            Feature::Entropy => "entropy",
            Feature::Skewness => "skewness",
            Feature::Kurtosis => "kurtosis",
            Feature::L1Norm => "l1",
            Feature::L2Norm => "l2",
            Feature::ZeroCurrentPeriod => "zero_current_period",
            Feature::MaxSlip => "max_slip",
        }
    }

    pub fn parse(name: &str) -> Result<Feature, FeatureError> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| FeatureError::UnknownFeature(name.to_string()))
    }
}

impl std::fmt::Display for Feature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered set of enabled features. Must contain the five ground-truth
/// features and stay small enough for exact Shapley enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturePool {
    features: Vec<Feature>,
}

impl FeaturePool {
    pub fn new(features: Vec<Feature>) -> Result<Self, FeatureError> {
        if !(5..=15).contains(&features.len()) {
            return Err(FeatureError::BadPoolSize(features.len()));
        }
        for (i, f) in features.iter().enumerate() {
            if features[..i].contains(f) {
                return Err(FeatureError::DuplicateFeature(*f));
            }
        }
        for gt in Feature::GROUND_TRUTH {
            if !features.contains(&gt) {
                return Err(FeatureError::MissingGroundTruth(gt));
            }
        }
        Ok(FeaturePool { features })
    }

    /// The full 12-feature pool in canonical order.
    pub fn default_pool() -> Self {
        FeaturePool {
            features: Feature::ALL.to_vec(),
        }
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn d(&self) -> usize {
        self.features.len()
    }

    pub fn index_of(&self, f: Feature) -> Option<usize> {
        self.features.iter().position(|&x| x == f)
    }
}

impl Default for FeaturePool {
    fn default() -> Self {
        FeaturePool::default_pool()
    }
}

/// Feature values for one window, ordered exactly like the pool that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    features: Vec<Feature>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn from_parts(features: Vec<Feature>, values: Vec<f64>) -> Self {
        assert_eq!(features.len(), values.len());
        FeatureVector { features, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn value(&self, f: Feature) -> Option<f64> {
        self.features
            .iter()
            .position(|&x| x == f)
            .map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Compute every enabled feature for one window. Degenerate (constant)
/// windows get entropy/skewness/kurtosis of 0 rather than NaN.
pub fn extract(win: &SignalWindow, pool: &FeaturePool) -> Result<FeatureVector, FeatureError> {
    let n = win.len();
    if n < 2 {
        return Err(FeatureError::WindowTooShort(n));
    }
    let x = &win.samples;
    let nf = n as f64;
    let dt = win.sample_period_ms;

    let mean = x.iter().sum::<f64>() / nf;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut max_abs = 0.0f64;
    let mut sum_sq = 0.0;
    let mut sum_abs = 0.0;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &v in x {
        min = min.min(v);
        max = max.max(v);
        max_abs = max_abs.max(v.abs());
        sum_sq += v * v;
        sum_abs += v.abs();
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;

    let degenerate = max == min;
    let variance = m2;
    let range = max - min;
    let rms = (sum_sq / nf).sqrt();
    let integral = sum_abs * dt;
    let l1 = sum_abs;
    let l2 = sum_sq.sqrt();
    let (skewness, kurtosis) = if degenerate || m2 == 0.0 {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    };
    let entropy = if degenerate {
        0.0
    } else {
        histogram_entropy(x, min, max)
    };
    let zero_threshold = ZERO_CURRENT_THRESHOLD * max_abs;
    let zero_current_period =
        x.iter().filter(|v| v.abs() < zero_threshold).count() as f64 / nf;
    let max_slip = x
        .windows(2)
        .map(|p| (p[1] - p[0]).abs())
        .fold(0.0f64, f64::max);

    let values = pool
        .features()
        .iter()
        .map(|f| match f {
            Feature::Mean => mean,
            Feature::Variance => variance,
            Feature::Range => range,
            Feature::Rms => rms,
            Feature::Integral => integral,
            Feature::Entropy => entropy,
            Feature::Skewness => skewness,
            Feature::Kurtosis => kurtosis,
            Feature::L1Norm => l1,
            Feature::L2Norm => l2,
            Feature::ZeroCurrentPeriod => zero_current_period,
            Feature::MaxSlip => max_slip,
        })
        .collect();

    Ok(FeatureVector {
        features: pool.features().to_vec(),
        values,
    })
}

/// Shannon entropy (bits) of the amplitude histogram over `[min, max]`.
fn histogram_entropy(x: &[f64], min: f64, max: f64) -> f64 {
    let span = max - min;
    let mut counts = [0usize; ENTROPY_BINS];
    for &v in x {
        let bin = (((v - min) / span) * ENTROPY_BINS as f64) as usize;
        counts[bin.min(ENTROPY_BINS - 1)] += 1;
    }
    let n = x.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Write a feature matrix as CSV: header is `window_id`, the pool names,
/// then `label`; one row per window.
pub fn write_feature_csv(
    path: &std::path::Path,
    pool: &FeaturePool,
    rows: &[(u32, &FeatureVector, usize)],
) -> std::io::Result<()> {
    let mut out = String::from("window_id");
    for f in pool.features() {
        out.push(',');
        out.push_str(f.name());
    }
    out.push_str(",label\n");
    for (id, vec, label) in rows {
        out.push_str(&id.to_string());
        for v in vec.values() {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push_str(&format!(",{label}\n"));
    }
    std::fs::write(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::NORMAL_CLASS;
    use proptest::prelude::*;

    fn win(samples: Vec<f64>, dt: f64) -> SignalWindow {
        let n = samples.len();
        SignalWindow {
            samples,
            sample_period_ms: dt,
            label: NORMAL_CLASS,
            arc_mask: vec![false; n],
        }
    }

    /// Straight-line recomputation of every feature from its definition,
    /// kept deliberately independent of the extraction pass.
    fn oracle(samples: &[f64], dt: f64, f: Feature) -> f64 {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let central = |p: i32| samples.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / n;
        match f {
            Feature::Mean => mean,
            Feature::Variance => central(2),
            Feature::Range => max - min,
            Feature::Rms => (samples.iter().map(|x| x * x).sum::<f64>() / n).sqrt(),
            Feature::Integral => samples.iter().map(|x| x.abs()).sum::<f64>() * dt,
            Feature::Entropy => {
                if max == min {
                    return 0.0;
                }
                let mut counts = vec![0usize; ENTROPY_BINS];
                for &v in samples {
                    let mut b = (((v - min) / (max - min)) * ENTROPY_BINS as f64) as usize;
                    if b >= ENTROPY_BINS {
                        b = ENTROPY_BINS - 1;
                    }
                    counts[b] += 1;
                }
                -counts
                    .iter()
                    .filter(|&&c| c > 0)
                    .map(|&c| {
                        let p = c as f64 / n;
                        p * p.log2()
                    })
                    .sum::<f64>()
            }
            Feature::Skewness => {
                if max == min {
                    0.0
                } else {
                    central(3) / central(2).powf(1.5)
                }
            }
            Feature::Kurtosis => {
                if max == min {
                    0.0
                } else {
                    central(4) / (central(2) * central(2))
                }
            }
            Feature::L1Norm => samples.iter().map(|x| x.abs()).sum(),
            Feature::L2Norm => samples.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Feature::ZeroCurrentPeriod => {
                let max_abs = samples.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
                samples
                    .iter()
                    .filter(|x| x.abs() < ZERO_CURRENT_THRESHOLD * max_abs)
                    .count() as f64
                    / n
            }
            Feature::MaxSlip => samples
                .windows(2)
                .map(|p| (p[1] - p[0]).abs())
                .fold(0.0f64, f64::max),
        }
    }

    #[test]
    fn constant_window_degenerates_cleanly() {
        let w = win(vec![3.0; 50], 1.0);
        let v = extract(&w, &FeaturePool::default_pool()).unwrap();
        assert_eq!(v.value(Feature::Variance).unwrap(), 0.0);
        assert_eq!(v.value(Feature::Range).unwrap(), 0.0);
        assert_eq!(v.value(Feature::Rms).unwrap(), 3.0);
        assert_eq!(v.value(Feature::L1Norm).unwrap(), 150.0);
        assert_eq!(v.value(Feature::Entropy).unwrap(), 0.0);
        assert_eq!(v.value(Feature::Skewness).unwrap(), 0.0);
        assert_eq!(v.value(Feature::Kurtosis).unwrap(), 0.0);
        assert!(v.values().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn integer_cycle_sine_has_exact_rms_and_mean() {
        let n = 1000;
        let samples: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 5.0 * i as f64 / n as f64).sin())
            .collect();
        let v = extract(&win(samples, 1.0), &FeaturePool::default_pool()).unwrap();
        assert!((v.value(Feature::Rms).unwrap() - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);
        assert!(v.value(Feature::Mean).unwrap().abs() < 1e-12);
    }

    #[test]
    fn matches_direct_definition_oracle() {
        let samples: Vec<f64> = (0..500)
            .map(|i| {
                let t = i as f64 * 0.013;
                (t * 3.1).sin() * 2.5 + (t * 17.0).cos() * 0.4 + 0.1 * t
            })
            .collect();
        let dt = 0.025;
        let v = extract(&win(samples.clone(), dt), &FeaturePool::default_pool()).unwrap();
        for f in Feature::ALL {
            let got = v.value(f).unwrap();
            let want = oracle(&samples, dt, f);
            let denom = want.abs().max(1e-12);
            assert!(
                (got - want).abs() / denom < 1e-12,
                "{f}: got {got}, oracle {want}"
            );
        }
    }

    #[test]
    fn too_short_window_is_rejected() {
        let w = win(vec![1.0], 1.0);
        assert!(matches!(
            extract(&w, &FeaturePool::default_pool()),
            Err(FeatureError::WindowTooShort(1))
        ));
    }

    #[test]
    fn pool_validation() {
        assert!(FeaturePool::new(vec![Feature::Mean, Feature::Variance]).is_err());
        let missing_gt = FeaturePool::new(vec![
            Feature::Mean,
            Feature::Variance,
            Feature::Range,
            Feature::Rms,
            Feature::Integral,
        ]);
        assert!(matches!(
            missing_gt,
            Err(FeatureError::MissingGroundTruth(Feature::Entropy))
        ));
        let good = FeaturePool::new(Feature::GROUND_TRUTH.to_vec()).unwrap();
        assert_eq!(good.d(), 5);
    }

    #[test]
    fn vector_order_equals_pool_order() {
        let pool = FeaturePool::new(vec![
            Feature::Entropy,
            Feature::Rms,
            Feature::Variance,
            Feature::Integral,
            Feature::Range,
        ])
        .unwrap();
        let samples: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
        let v = extract(&win(samples, 1.0), &pool).unwrap();
        assert_eq!(v.features(), pool.features());
    }

    proptest! {
        #[test]
        fn scaling_and_shift_laws(
            samples in proptest::collection::vec(-100.0f64..100.0, 8..200),
            c in 0.001f64..1000.0,
            shift in -50.0f64..50.0,
        ) {
            let pool = FeaturePool::default_pool();
            let w = win(samples.clone(), 1.0);
            let base = extract(&w, &pool).unwrap();

            let scaled = win(samples.iter().map(|x| c * x).collect(), 1.0);
            let vs = extract(&scaled, &pool).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-9);

            for f in [Feature::Range, Feature::Rms, Feature::L1Norm, Feature::L2Norm,
                      Feature::Integral, Feature::MaxSlip] {
                prop_assert!(rel(vs.value(f).unwrap(), c * base.value(f).unwrap()) < 1e-9);
            }
            prop_assert!(rel(vs.value(Feature::Variance).unwrap(),
                             c * c * base.value(Feature::Variance).unwrap()) < 1e-9);
            // scale-invariant features
            prop_assert!((vs.value(Feature::ZeroCurrentPeriod).unwrap()
                - base.value(Feature::ZeroCurrentPeriod).unwrap()).abs() < 1e-12);
            prop_assert!((vs.value(Feature::Entropy).unwrap()
                - base.value(Feature::Entropy).unwrap()).abs() < 1e-9);

            let shifted = win(samples.iter().map(|x| x + shift).collect(), 1.0);
            let vh = extract(&shifted, &pool).unwrap();
            for f in [Feature::Variance, Feature::Range, Feature::MaxSlip] {
                let a = vh.value(f).unwrap();
                let b = base.value(f).unwrap();
                prop_assert!((a - b).abs() / a.abs().max(b.abs()).max(1.0) < 1e-7);
            }
        }

        #[test]
        fn outputs_always_finite(
            samples in proptest::collection::vec(
                prop_oneof![Just(0.0f64), -1e12f64..1e12], 2..64),
        ) {
            let v = extract(&win(samples, 5e-3), &FeaturePool::default_pool()).unwrap();
            prop_assert!(v.values().iter().all(|x| x.is_finite()));
        }
    }
}
