//! Dataset assembly: base synthesis at the native rate, per-cell
//! derivation (decimation plus noise), deterministic splits, and the
//! occlusion explanation set.

use xsei_core::features::{extract, FeaturePool, FeatureVector};
use xsei_core::seed::{derive_seed, rng_from, shuffle};
use xsei_core::signal::{
    add_noise, downsample, synthesize, window_with_threshold, LoadProfile, SignalWindow,
    ARC_CLASS, NORMAL_CLASS,
};
use xsei_core::xsei::{ground_truth_regions_from_mask, GroundTruthRegions};

use crate::config::ExperimentConfig;
use crate::HarnessError;

/// Synthesis margin: the arc recording is cut longer than strictly needed
/// because windows with marginal arc content are discarded by labeling.
const ARC_WINDOW_MARGIN: f64 = 2.4;

/// Synthesize the base dataset at the native sample period: per profile,
/// one normal recording and one arcing recording, windowed and labeled.
/// Balanced by construction; deterministic given `seed`.
pub fn build_base_dataset(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<SignalWindow>, HarnessError> {
    let per_class = cfg.windows_per_class_per_profile;
    let width = cfg.window_width;
    let step = cfg.window_step;
    let mut windows = Vec::with_capacity(2 * per_class * cfg.profiles.len());

    for profile in &cfg.profiles {
        // normal recording: exactly per_class windows, no arc
        let mut normal_profile = profile.clone();
        normal_profile.arc.fraction = 0.0;
        let duration = (per_class - 1) * step + width;
        let (wave, mask) = synthesize(
            &normal_profile,
            duration,
            derive_seed(seed, &format!("synth/{}/normal", profile.name)),
        )?;
        let normals =
            window_with_threshold(&wave, &mask, width, step, cfg.arc_label_threshold)?;
        debug_assert_eq!(normals.len(), per_class);
        windows.extend(normals);

        // arcing recordings: one per event scale, arc windows drawn evenly
        if profile.arc.fraction <= 0.0 {
            return Err(HarnessError::Config(format!(
                "profile `{}` has no arc fraction configured",
                profile.name
            )));
        }
        let scales = if cfg.arc_event_samples.is_empty() {
            vec![250_000]
        } else {
            cfg.arc_event_samples.clone()
        };
        let base_quota = per_class / scales.len();
        for (scale_idx, &event_samples) in scales.iter().enumerate() {
            let quota = if scale_idx == 0 {
                per_class - base_quota * (scales.len() - 1)
            } else {
                base_quota
            };
            if quota == 0 {
                continue;
            }
            let margin_count = (quota as f64 * ARC_WINDOW_MARGIN).ceil() as usize;
            let duration = (margin_count - 1) * step + width;
            let mut arc_profile = profile.clone();
            arc_profile.arc.events = ((duration as f64 * profile.arc.fraction
                / event_samples.max(1) as f64)
                .round() as usize)
                .max(1);
            let (wave, mask) = synthesize(
                &arc_profile,
                duration,
                derive_seed(seed, &format!("synth/{}/arc/{scale_idx}", profile.name)),
            )?;
            let cut = window_with_threshold(&wave, &mask, width, step, cfg.arc_label_threshold)?;
            let arcs: Vec<SignalWindow> = cut
                .into_iter()
                .filter(|w| w.label == ARC_CLASS)
                .take(quota)
                .collect();
            if arcs.len() < quota {
                return Err(HarnessError::Config(format!(
                    "profile `{}` event scale {event_samples} yielded only {} arc windows \
                     of {quota} requested; raise the arc fraction",
                    profile.name,
                    arcs.len(),
                )));
            }
            windows.extend(arcs);
        }
    }
    Ok(windows)
}

/// Derive one grid cell's dataset: decimate by `factor`, then inject
/// noise at `snr_db` per window with per-window sub-seeds.
pub fn derive_cell_windows(
    base: &[SignalWindow],
    factor: usize,
    snr_db: Option<f64>,
    cell_seed: u64,
) -> Result<Vec<SignalWindow>, HarnessError> {
    base.iter()
        .enumerate()
        .map(|(i, w)| {
            let mut out = downsample(w, factor)?;
            if let Some(snr) = snr_db {
                out = add_noise(&out, snr, derive_seed(cell_seed, &format!("noise/{i}")))?;
            }
            Ok(out)
        })
        .collect()
}

/// Deterministic shuffled split into train/val/test index sets.
pub fn split_indices(
    n: usize,
    ratios: &crate::config::SplitRatios,
    seed: u64,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut order, &mut rng_from(derive_seed(seed, "split")));
    let n_train = (ratios.train * n as f64).floor() as usize;
    let n_val = (ratios.val * n as f64).floor() as usize;
    let train = order[..n_train].to_vec();
    let val = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    (train, val, test)
}

/// A derived cell dataset with features extracted and splits resolved.
pub struct CellData {
    pub windows: Vec<SignalWindow>,
    pub features: Vec<FeatureVector>,
    pub labels: Vec<usize>,
    pub pool: FeaturePool,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub sample_period_ms: f64,
}

impl CellData {
    pub fn select_windows(&self, idx: &[usize]) -> Vec<SignalWindow> {
        idx.iter().map(|&i| self.windows[i].clone()).collect()
    }

    pub fn select_features(&self, idx: &[usize]) -> Vec<FeatureVector> {
        idx.iter().map(|&i| self.features[i].clone()).collect()
    }

    pub fn select_labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }
}

/// Assemble a cell: derive windows, extract the feature pool, and split.
pub fn prepare_cell(
    cfg: &ExperimentConfig,
    base: &[SignalWindow],
    factor: usize,
    snr_db: Option<f64>,
    cell_seed: u64,
) -> Result<CellData, HarnessError> {
    let windows = derive_cell_windows(base, factor, snr_db, cell_seed)?;
    let pool = FeaturePool::default_pool();
    let features = windows
        .iter()
        .map(|w| extract(w, &pool))
        .collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<usize> = windows.iter().map(|w| w.label).collect();
    let sample_period_ms = windows
        .first()
        .map(|w| w.sample_period_ms)
        .unwrap_or(5e-3);
    let (train_idx, val_idx, test_idx) = split_indices(windows.len(), &cfg.split, cell_seed);
    Ok(CellData {
        windows,
        features,
        labels,
        pool,
        train_idx,
        val_idx,
        test_idx,
        sample_period_ms,
    })
}

/// The occlusion evaluation set: one synthesized arc window (seeded onset,
/// known mask) observed under several noise draws at the cell's SNR, plus
/// the mask-derived ground-truth region grid. Sharing one underlying
/// window keeps the single region ground truth well defined while the
/// mean over realizations denoises the responsibilities.
pub struct ExplanationSet {
    pub windows: Vec<SignalWindow>,
    pub truth: GroundTruthRegions,
    /// The clean underlying arc window at the cell rate.
    pub base_window: SignalWindow,
    /// The aligned no-arc counterpart (for pairwise derivation).
    pub normal_window: SignalWindow,
}

/// Build the configured number of independent explanation sets.
pub fn build_explanation_sets(
    cfg: &ExperimentConfig,
    profile: &LoadProfile,
    factor: usize,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<Vec<ExplanationSet>, HarnessError> {
    (0..cfg.explain.explain_windows.max(1))
        .map(|k| {
            build_explanation_set(cfg, profile, factor, snr_db, derive_seed(seed, &format!("explain-window/{k}")))
        })
        .collect()
}

pub fn build_explanation_set(
    cfg: &ExperimentConfig,
    profile: &LoadProfile,
    factor: usize,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<ExplanationSet, HarnessError> {
    let width = cfg.window_width;
    let n_regions = cfg.explain.regions;

    // A fresh arc recording from the same synthesis family as the
    // training data, plus its no-arc twin off the same seed. The
    // explanation window is the first cut whose arc content sits in the
    // target band: arced enough that models confidently detect it,
    // partial enough that the region score can discriminate.
    let duration = 8 * width;
    let strike_scale = cfg.arc_event_samples.last().copied().unwrap_or(4_000);
    let mut arc_profile = profile.clone();
    arc_profile.arc.events = ((duration as f64 * profile.arc.fraction
        / strike_scale.max(1) as f64)
        .round() as usize)
        .max(1);
    let mut normal_profile = arc_profile.clone();
    normal_profile.arc.fraction = 0.0;

    let synth_seed = derive_seed(seed, "explain/recording");
    let (arc_wave, arc_mask) = synthesize(&arc_profile, duration, synth_seed)?;
    let (normal_wave, _) = synthesize(&normal_profile, duration, synth_seed)?;

    let target = cfg.explain.explain_arc_fraction;
    let band = (target - 0.15).max(0.05)..=(target + 0.15).min(0.95);
    let step = width / 4;
    let mut start = None;
    for offset in (0..=duration - width).step_by(step.max(1)) {
        let hits = arc_mask.flags[offset..offset + width]
            .iter()
            .filter(|&&f| f)
            .count();
        let frac = hits as f64 / width as f64;
        if band.contains(&frac) {
            start = Some(offset);
            break;
        }
    }
    let start = start.ok_or_else(|| {
        HarnessError::Config(format!(
            "no window with arc fraction near {target} found in the explanation recording; \
             adjust explain_arc_fraction or the profile's arc settings",
        ))
    })?;

    let cut = |samples: &[f64], mask: &[bool], label: usize| -> Result<SignalWindow, HarnessError> {
        let w = SignalWindow {
            samples: samples[start..start + width].to_vec(),
            sample_period_ms: profile.sample_period_ms,
            label,
            arc_mask: mask[start..start + width].to_vec(),
        };
        Ok(downsample(&w, factor)?)
    };
    let base_window = cut(&arc_wave.samples, &arc_mask.flags, ARC_CLASS)?;
    let normal_window = cut(&normal_wave.samples, &vec![false; duration], NORMAL_CLASS)?;

    let truth = ground_truth_regions_from_mask(
        &base_window.arc_mask,
        base_window.len(),
        n_regions,
    )?;

    let realizations = cfg.explain.occlusion_realizations.max(1);
    let windows = match snr_db {
        Some(snr) => (0..realizations)
            .map(|i| {
                add_noise(
                    &base_window,
                    snr,
                    derive_seed(seed, &format!("explain/noise/{i}")),
                )
                .map_err(HarnessError::from)
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![base_window.clone()],
    };

    Ok(ExplanationSet {
        windows,
        truth,
        base_window,
        normal_window,
    })
}

/// Seeded subset of test indices used for the Shapley pass.
pub fn explain_sample_indices(test_idx: &[usize], count: usize, seed: u64) -> Vec<usize> {
    let mut order = test_idx.to_vec();
    shuffle(&mut order, &mut rng_from(derive_seed(seed, "explain/samples")));
    order.truncate(count.max(1).min(test_idx.len()));
    order
}

/// Seeded subset of training features used as the removal background.
pub fn background_indices(train_idx: &[usize], count: usize, seed: u64) -> Vec<usize> {
    let mut order = train_idx.to_vec();
    shuffle(&mut order, &mut rng_from(derive_seed(seed, "explain/background")));
    order.truncate(count.max(1).min(train_idx.len()));
    order
}
