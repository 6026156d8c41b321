//! Soft evaluation toolkit for arc-fault classifiers.
//!
//! Accuracy alone does not say whether a fault classifier actually keys on
//! arc physics or on incidental noise. This crate scores that question
//! directly: it synthesizes labeled arc/normal current waveforms with known
//! fault spans, extracts a statistical feature pool, trains a small zoo of
//! feature-pool and raw-signal classifiers, attributes their decisions with
//! exact Shapley values and occlusion sensitivity, and reduces each model's
//! attribution to a soft score in `[0, 1]` — the Jaccard agreement between
//! what the model found important and the defined ground truth.
//!
//! Modules mirror the pipeline stages:
//!
//! - [`signal`] — waveform synthesis, windowing, downsampling, noise
//!   injection, spectra, and the on-disk dataset formats
//! - [`features`] — the statistical feature pool extracted per window
//! - [`nncore`] — a minimal deterministic 1-D conv/dense engine with Adam
//! - [`models`] — the classifier zoo behind one prediction interface
//! - [`explain`] — exact/sampled Shapley values and occlusion sensitivity
//! - [`xsei`] — ground-truth definitions, soft scores, and the evaluation
//!   process that produces per-model `(accuracy, score)` reports
//!
//! Everything is pure given `(inputs, seed)`; identical seeds reproduce
//! identical bytes.

pub mod explain;
pub mod features;
pub mod models;
pub mod nncore;
pub mod seed;
pub mod signal;
pub mod xsei;
