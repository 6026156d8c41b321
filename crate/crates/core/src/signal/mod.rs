//! Waveforms, windows, and the dataset transforms applied before training:
//! windowing, decimation, calibrated noise injection, and magnitude spectra.
//!
//! All operations here are pure given `(inputs, seed)` and safe to call
//! concurrently; nothing holds shared mutable state.

pub mod dataset;
pub mod fft;
pub mod synth;

use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::seed::rng_from;
use fft::Complex;

pub use synth::{synthesize, ArcBehavior, ArcSignature, Harmonic, LoadProfile, MAINS_HZ};

/// Class label of windows without any arc content.
pub const NORMAL_CLASS: usize = 0;
/// Class label of windows carrying an arc event.
pub const ARC_CLASS: usize = 1;

/// Fraction of arc samples a window needs to be labeled as arc; windows with
/// some arc content below this are discarded rather than mislabeled.
pub const DEFAULT_ARC_LABEL_THRESHOLD: f64 = 0.10;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid load profile: {0}")]
    InvalidProfile(String),
    #[error("duration {duration} shorter than one mains cycle ({min} samples)")]
    DurationTooShort { duration: usize, min: usize },
    #[error("waveform must be nonempty")]
    EmptyWaveform,
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("sample period must be positive, got {0}")]
    NonPositivePeriod(f64),
    #[error("mask length {mask} does not match waveform length {len}")]
    MaskLengthMismatch { mask: usize, len: usize },
    #[error("window width {width} exceeds waveform length {len}")]
    WidthExceedsLength { width: usize, len: usize },
    #[error("window width and step must be >= 1")]
    DegenerateWindowing,
    #[error("downsample factor must be >= 1")]
    ZeroFactor,
    #[error("window has zero signal power; SNR is undefined")]
    ZeroSignalPower,
    #[error("window too short: need at least {min} samples, got {len}")]
    WindowTooShort { len: usize, min: usize },
}

/// A synthesized or ingested current trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_period_ms: f64,
    /// Free-form load descriptor.
    pub load: String,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_period_ms: f64, load: &str) -> Result<Self, SignalError> {
        if samples.is_empty() {
            return Err(SignalError::EmptyWaveform);
        }
        if sample_period_ms.is_nan() || !sample_period_ms.is_finite() || sample_period_ms <= 0.0 {
            return Err(SignalError::NonPositivePeriod(sample_period_ms));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SignalError::NonFiniteSample(i));
        }
        Ok(Waveform {
            samples,
            sample_period_ms,
            load: load.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Per-sample arc provenance: `true` marks samples inside an arc event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArcMask {
    pub flags: Vec<bool>,
}

impl ArcMask {
    pub fn all_clear(len: usize) -> Self {
        ArcMask {
            flags: vec![false; len],
        }
    }
}

/// A fixed-length labeled slice of a waveform, the unit every model consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalWindow {
    pub samples: Vec<f64>,
    pub sample_period_ms: f64,
    pub label: usize,
    pub arc_mask: Vec<bool>,
}

impl SignalWindow {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Root-mean-square of the window samples.
    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|x| x * x).sum::<f64>() / self.len() as f64).sqrt()
    }

    /// Fraction of samples flagged as arc.
    pub fn arc_fraction(&self) -> f64 {
        let hits = self.arc_mask.iter().filter(|&&f| f).count();
        hits as f64 / self.arc_mask.len().max(1) as f64
    }
}

/// One-sided magnitude spectrum of a real window.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub magnitudes: Vec<f64>,
    pub bin_width_hz: f64,
}

impl Spectrum {
    /// Index of the strongest bin.
    pub fn dominant_bin(&self) -> usize {
        self.magnitudes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Cut a waveform into windows of `width` samples every `step` samples,
/// using the default arc labeling threshold.
///
/// Windows start at `0, step, 2*step, ...`; with no discards that yields
/// `(len - width) / step + 1` windows. A window is labeled arc when at
/// least [`DEFAULT_ARC_LABEL_THRESHOLD`] of its samples are masked, normal
/// when none are, and is dropped otherwise (a sliver of arc content would
/// poison the ground truth on both sides).
pub fn window(
    waveform: &Waveform,
    mask: &ArcMask,
    width: usize,
    step: usize,
) -> Result<Vec<SignalWindow>, SignalError> {
    window_with_threshold(waveform, mask, width, step, DEFAULT_ARC_LABEL_THRESHOLD)
}

/// [`window`] with an explicit arc labeling threshold in `[0, 1]`.
pub fn window_with_threshold(
    waveform: &Waveform,
    mask: &ArcMask,
    width: usize,
    step: usize,
    arc_label_threshold: f64,
) -> Result<Vec<SignalWindow>, SignalError> {
    if width == 0 || step == 0 {
        return Err(SignalError::DegenerateWindowing);
    }
    let len = waveform.len();
    if width > len {
        return Err(SignalError::WidthExceedsLength { width, len });
    }
    if mask.flags.len() != len {
        return Err(SignalError::MaskLengthMismatch {
            mask: mask.flags.len(),
            len,
        });
    }

    let count = (len - width) / step + 1;
    let mut windows = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * step;
        let slice = &waveform.samples[start..start + width];
        let mask_slice = &mask.flags[start..start + width];
        let arc_samples = mask_slice.iter().filter(|&&f| f).count();
        let frac = arc_samples as f64 / width as f64;
        let label = if arc_samples == 0 {
            NORMAL_CLASS
        } else if frac >= arc_label_threshold {
            ARC_CLASS
        } else {
            continue; // mixed window with marginal arc content
        };
        windows.push(SignalWindow {
            samples: slice.to_vec(),
            sample_period_ms: waveform.sample_period_ms,
            label,
            arc_mask: mask_slice.to_vec(),
        });
    }
    Ok(windows)
}

/// Decimate: keep every `factor`-th sample starting at index 0. The sample
/// period grows by `factor` and the mask is decimated identically. No
/// anti-alias pre-filter is applied (see [`downsample_filtered`]).
pub fn downsample(win: &SignalWindow, factor: usize) -> Result<SignalWindow, SignalError> {
    if factor == 0 {
        return Err(SignalError::ZeroFactor);
    }
    Ok(SignalWindow {
        samples: win.samples.iter().copied().step_by(factor).collect(),
        sample_period_ms: win.sample_period_ms * factor as f64,
        label: win.label,
        arc_mask: win.arc_mask.iter().copied().step_by(factor).collect(),
    })
}

/// Decimation with an optional boxcar pre-filter over each kept block.
/// Off by default everywhere; plain [`downsample`] matches the reference
/// protocol, this variant exists for noisy external recordings.
pub fn downsample_filtered(
    win: &SignalWindow,
    factor: usize,
    pre_filter: bool,
) -> Result<SignalWindow, SignalError> {
    if !pre_filter {
        return downsample(win, factor);
    }
    if factor == 0 {
        return Err(SignalError::ZeroFactor);
    }
    let samples: Vec<f64> = win
        .samples
        .chunks(factor)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    Ok(SignalWindow {
        samples,
        sample_period_ms: win.sample_period_ms * factor as f64,
        label: win.label,
        arc_mask: win.arc_mask.iter().copied().step_by(factor).collect(),
    })
}

/// Add zero-mean white Gaussian noise at the requested SNR (dB) relative to
/// the window's mean squared value. Label and mask pass through untouched.
pub fn add_noise(win: &SignalWindow, snr_db: f64, seed: u64) -> Result<SignalWindow, SignalError> {
    if win.is_empty() {
        return Err(SignalError::EmptyWaveform);
    }
    let signal_power = win.samples.iter().map(|x| x * x).sum::<f64>() / win.len() as f64;
    if signal_power <= 0.0 {
        return Err(SignalError::ZeroSignalPower);
    }
    let noise_power = signal_power / 10f64.powf(snr_db / 10.0);
    let sigma = noise_power.sqrt();
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let mut rng = rng_from(seed);
    let samples = win
        .samples
        .iter()
        .map(|x| x + normal.sample(&mut rng))
        .collect();
    Ok(SignalWindow {
        samples,
        sample_period_ms: win.sample_period_ms,
        label: win.label,
        arc_mask: win.arc_mask.clone(),
    })
}

/// One-sided magnitude spectrum (unnormalized forward transform). The
/// result has `floor(N/2) + 1` bins of width `1 / (N * sample_period)`.
pub fn fft_magnitude(win: &SignalWindow) -> Result<Spectrum, SignalError> {
    let n = win.len();
    if n < 2 {
        return Err(SignalError::WindowTooShort { len: n, min: 2 });
    }
    let input: Vec<Complex> = win.samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    let bins = fft::fft(&input);
    let magnitudes = bins[..=n / 2].iter().map(|c| c.norm()).collect();
    Ok(Spectrum {
        magnitudes,
        bin_width_hz: 1.0 / (n as f64 * win.sample_period_ms * 1e-3),
    })
}
