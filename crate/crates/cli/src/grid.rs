//! The experiment grid: a cartesian sweep over sample-time factors, SNR
//! levels, and seed repetitions. Every cell derives its dataset, retrains
//! the selected models, runs the soft evaluation, and persists dataset,
//! checkpoints, loss curves, and report. A manifest records every artifact
//! and lets interrupted runs resume to a byte-identical final state.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use xsei_core::models::{save_model, TrainedModel};
use xsei_core::nncore::train::write_loss_curve;
use xsei_core::seed::derive_seed;
use xsei_core::signal::dataset::{write_dataset, DataFormat, DatasetInfo};
use xsei_core::xsei::{soft_evaluate, EvalData, GroundTruthFeatures, OcclusionGroup, XseiConfig, XseiReport};

use crate::config::ExperimentConfig;
use crate::data::{
    background_indices, build_base_dataset, build_explanation_sets, explain_sample_indices,
    prepare_cell,
};
use crate::zoo::{train_zoo, ModelSelect};
use crate::{io_err, HarnessError};

pub const MANIFEST_VERSION: u32 = 1;

/// One grid coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub factor: usize,
    pub snr_db: Option<f64>,
    pub seed_index: usize,
}

impl CellKey {
    pub fn id(&self) -> String {
        let snr = match self.snr_db {
            Some(v) => format!("snr{v}"),
            None => "clean".to_string(),
        };
        format!("t{}-{}-s{}", self.factor, snr, self.seed_index)
    }

    pub fn sample_period_ms(&self, base_period_ms: f64) -> f64 {
        base_period_ms * self.factor as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub key: CellKey,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_manifest: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoint_files: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curve_files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Done,
    Failed,
}

/// Every emitted artifact of a grid run, keyed by cell id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub toolkit_version: String,
    /// Hash over the config and root seed; resumes must match.
    pub config_hash: String,
    pub root_seed: u64,
    pub cells: BTreeMap<String, CellRecord>,
}

impl RunManifest {
    fn new(config_hash: String, root_seed: u64) -> Self {
        RunManifest {
            schema_version: MANIFEST_VERSION,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            root_seed,
            cells: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| io_err(path, e))
    }
}

/// Result of a grid run: per-cell reports in deterministic cell order
/// plus the manifest describing everything on disk.
#[derive(Debug)]
pub struct GridOutcome {
    pub reports: Vec<(CellKey, XseiReport)>,
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    /// Cells computed in this invocation (excludes resumed cells).
    pub computed: usize,
}

/// All grid coordinates in deterministic sweep order.
pub fn grid_cells(cfg: &ExperimentConfig) -> Vec<CellKey> {
    let mut cells = Vec::new();
    for seed_index in 0..cfg.seed_repeats {
        for &factor in &cfg.sample_time_factors {
            for &snr_db in &cfg.snr_dbs {
                cells.push(CellKey {
                    factor,
                    snr_db,
                    seed_index,
                });
            }
        }
    }
    cells
}

/// Run (or resume) the grid. `limit` bounds how many cells this
/// invocation computes, which is how interruption is simulated in tests;
/// already-complete cells never count against it.
pub fn run_grid(
    cfg: &ExperimentConfig,
    selection: &[ModelSelect],
    root_seed: u64,
    out_dir: &Path,
    limit: Option<usize>,
) -> Result<GridOutcome, HarnessError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let manifest_path = out_dir.join("manifest.json");
    // cover the model selection too: an override changes the outputs
    let selection_names: Vec<&str> = selection.iter().map(|m| m.name()).collect();
    let hash_input = format!(
        "{}|{}",
        cfg.content_hash(root_seed),
        selection_names.join(",")
    );
    let config_hash = format!("{:016x}", xsei_core::seed::fnv1a64(hash_input.as_bytes()));

    let mut manifest = if manifest_path.exists() {
        let existing = RunManifest::load(&manifest_path)?;
        if existing.config_hash != config_hash {
            return Err(HarnessError::Other(format!(
                "output directory holds a manifest for config hash {}, current hash is {}; \
                 use a fresh --out directory",
                existing.config_hash, config_hash
            )));
        }
        existing
    } else {
        RunManifest::new(config_hash, root_seed)
    };

    let cells = grid_cells(cfg);
    let mut base_cache: BTreeMap<usize, Vec<xsei_core::signal::SignalWindow>> = BTreeMap::new();
    let mut reports = Vec::new();
    let mut computed = 0usize;

    for key in cells {
        let id = key.id();

        // resume: reuse finished cells verbatim
        if let Some(record) = manifest.cells.get(&id) {
            match record.status {
                CellStatus::Done => {
                    let report_file = record
                        .report_file
                        .as_ref()
                        .ok_or_else(|| HarnessError::Other(format!("cell {id} lost its report")))?;
                    let path = out_dir.join(report_file);
                    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                    reports.push((key, serde_json::from_str(&text)?));
                    continue;
                }
                CellStatus::Failed => continue,
            }
        }

        if let Some(max) = limit {
            if computed >= max {
                continue;
            }
        }
        computed += 1;

        let grid_seed = derive_seed(root_seed, &format!("grid/seed/{}", key.seed_index));
        if !base_cache.contains_key(&key.seed_index) {
            // one base synthesis per seed repetition, shared by its cells
            base_cache.retain(|&s, _| s == key.seed_index);
            base_cache.insert(key.seed_index, build_base_dataset(cfg, grid_seed)?);
        }
        let base = &base_cache[&key.seed_index];

        match compute_cell(cfg, selection, base, grid_seed, out_dir, key) {
            Ok((record, report)) => {
                manifest.cells.insert(id, record);
                reports.push((key, report));
            }
            Err(e) => {
                manifest.cells.insert(
                    id,
                    CellRecord {
                        key,
                        status: CellStatus::Failed,
                        report_file: None,
                        dataset_manifest: None,
                        checkpoint_files: Vec::new(),
                        curve_files: Vec::new(),
                        error: Some(e.to_string()),
                    },
                );
            }
        }
        manifest.save(&manifest_path)?;
    }

    manifest.save(&manifest_path)?;
    Ok(GridOutcome {
        reports,
        manifest,
        manifest_path,
        computed,
    })
}

fn compute_cell(
    cfg: &ExperimentConfig,
    selection: &[ModelSelect],
    base: &[xsei_core::signal::SignalWindow],
    grid_seed: u64,
    out_dir: &Path,
    key: CellKey,
) -> Result<(CellRecord, XseiReport), HarnessError> {
    let id = key.id();
    let cell_seed = derive_seed(grid_seed, &format!("cell/{id}"));

    let cell = prepare_cell(cfg, base, key.factor, key.snr_db, cell_seed)?;

    // persist the derived dataset
    let dataset_dir = out_dir.join("datasets").join(&id);
    let info = DatasetInfo {
        class_names: cfg.class_names.clone(),
        window_width: cfg.window_width / key.factor.max(1),
        window_step: cfg.window_step / key.factor.max(1),
        seeds: vec![grid_seed, cell_seed],
        snr_db: key.snr_db,
    };
    let dataset_manifest = write_dataset(&dataset_dir, &info, &cell.windows, DataFormat::Binary)?;
    let feature_rows: Vec<(u32, &xsei_core::features::FeatureVector, usize)> = cell
        .features
        .iter()
        .zip(&cell.labels)
        .enumerate()
        .map(|(i, (vec, &label))| (i as u32, vec, label))
        .collect();
    let features_path = dataset_dir.join("features.csv");
    xsei_core::features::write_feature_csv(&features_path, &cell.pool, &feature_rows)
        .map_err(|e| io_err(&features_path, e))?;

    // train and persist the zoo
    let zoo = train_zoo(selection, &cell, cfg, cell_seed)?;
    let ckpt_dir = out_dir.join("checkpoints").join(&id);
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| io_err(&ckpt_dir, e))?;
    let mut checkpoint_files = Vec::new();
    for model in &zoo.models {
        let path = ckpt_dir.join(format!("{}.model", model.name()));
        save_model(model, &path)?;
        checkpoint_files.push(rel_path(out_dir, &path));
    }
    let mut curve_files = Vec::new();
    for (name, curve) in &zoo.curves {
        let path = ckpt_dir.join(format!("{name}-curve.csv"));
        write_loss_curve(&path, curve).map_err(|e| io_err(&path, e))?;
        curve_files.push(rel_path(out_dir, &path));
    }

    // evaluate
    let mut report = evaluate_cell(cfg, &cell, &zoo.models, key, cell_seed)?;
    report.sample_period_ms = Some(key.sample_period_ms(base_period(cfg)));
    report.snr_db = key.snr_db;

    let reports_dir = out_dir.join("reports");
    std::fs::create_dir_all(&reports_dir).map_err(|e| io_err(&reports_dir, e))?;
    let report_path = reports_dir.join(format!("{id}.json"));
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)
        .map_err(|e| io_err(&report_path, e))?;

    Ok((
        CellRecord {
            key,
            status: CellStatus::Done,
            report_file: Some(rel_path(out_dir, &report_path)),
            dataset_manifest: Some(rel_path(out_dir, &dataset_manifest)),
            checkpoint_files,
            curve_files,
            error: None,
        },
        report,
    ))
}

fn base_period(cfg: &ExperimentConfig) -> f64 {
    cfg.profiles
        .first()
        .map(|p| p.sample_period_ms)
        .unwrap_or(5e-3)
}

fn rel_path(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned()
}

/// Soft-evaluate a trained zoo on one prepared cell.
pub fn evaluate_cell(
    cfg: &ExperimentConfig,
    cell: &crate::data::CellData,
    models: &[TrainedModel],
    key: CellKey,
    cell_seed: u64,
) -> Result<XseiReport, HarnessError> {
    let test_features = cell.select_features(&cell.test_idx);
    let test_windows = cell.select_windows(&cell.test_idx);
    let test_labels = cell.select_labels(&cell.test_idx);

    let explain_idx = explain_sample_indices(&cell.test_idx, cfg.explain.shap_samples, cell_seed);
    let explain_samples = cell.select_features(&explain_idx);
    let bg_idx = background_indices(&cell.train_idx, cfg.explain.background_rows, cell_seed);
    let background = cell.select_features(&bg_idx);

    let profile = &cfg.profiles[cfg.explain.explain_profile_index];
    let explanations = build_explanation_sets(cfg, profile, key.factor, key.snr_db, cell_seed)?;
    let groups: Vec<OcclusionGroup<'_>> = explanations
        .iter()
        .map(|set| OcclusionGroup {
            windows: &set.windows,
            reference: &set.base_window,
            counterfactual: Some(&set.normal_window),
            truth: &set.truth,
        })
        .collect();

    let truth_features = GroundTruthFeatures::default();
    let data = EvalData {
        pool: &cell.pool,
        test_features: &test_features,
        test_windows: &test_windows,
        test_labels: &test_labels,
        explain_samples: &explain_samples,
        background: &background,
        truth_features: &truth_features,
        occlusion_groups: &groups,
    };
    let xsei_cfg = XseiConfig {
        removal: cfg.explain.removal,
        occlusion_baseline: cfg.explain.occlusion_baseline,
        region_count: cfg.explain.regions,
        res_threshold: cfg.explain.res_threshold,
        top_k: cfg.explain.top_k,
        seed: derive_seed(cell_seed, "xsei"),
    };
    let model_refs: Vec<&TrainedModel> = models.iter().collect();
    Ok(soft_evaluate(&model_refs, &data, &xsei_cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.windows_per_class_per_profile = 6;
        cfg.window_width = 4000;
        cfg.window_step = 2000;
        cfg.sample_time_factors = vec![10, 20];
        cfg.snr_dbs = vec![Some(5.0)];
        cfg.models = vec!["knn".to_string(), "cart".to_string()];
        cfg.explain.shap_samples = 4;
        cfg.explain.occlusion_realizations = 2;
        cfg.explain.regions = 10;
        cfg
    }

    #[test]
    fn cell_ids_are_stable() {
        let key = CellKey {
            factor: 5,
            snr_db: Some(-3.0),
            seed_index: 1,
        };
        assert_eq!(key.id(), "t5-snr-3-s1");
        let clean = CellKey {
            factor: 1,
            snr_db: None,
            seed_index: 0,
        };
        assert_eq!(clean.id(), "t1-clean-s0");
    }

    #[test]
    fn empty_model_list_is_a_successful_empty_report() {
        let cfg = fast_config();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_grid(&cfg, &[], 7, dir.path(), None).unwrap();
        assert_eq!(outcome.reports.len(), 2);
        for (_, report) in &outcome.reports {
            assert!(report.rows.is_empty());
        }
    }

    #[test]
    fn grid_covers_every_cell_and_resumes_identically() {
        let cfg = fast_config();
        let selection = [ModelSelect::Knn, ModelSelect::Cart];

        let full_dir = tempfile::tempdir().unwrap();
        let full = run_grid(&cfg, &selection, 3, full_dir.path(), None).unwrap();
        assert_eq!(full.reports.len(), 2);
        assert_eq!(full.computed, 2);

        // interrupted after one cell, then resumed
        let resumed_dir = tempfile::tempdir().unwrap();
        let first = run_grid(&cfg, &selection, 3, resumed_dir.path(), Some(1)).unwrap();
        assert_eq!(first.computed, 1);
        assert_eq!(first.reports.len(), 1);
        let second = run_grid(&cfg, &selection, 3, resumed_dir.path(), None).unwrap();
        assert_eq!(second.computed, 1);
        assert_eq!(second.reports.len(), 2);

        let full_manifest = std::fs::read_to_string(&full.manifest_path).unwrap();
        let resumed_manifest = std::fs::read_to_string(&second.manifest_path).unwrap();
        assert_eq!(full_manifest, resumed_manifest);

        for (key, _) in &full.reports {
            let rel = format!("reports/{}.json", key.id());
            let a = std::fs::read(full_dir.path().join(&rel)).unwrap();
            let b = std::fs::read(resumed_dir.path().join(&rel)).unwrap();
            assert_eq!(a, b, "cell {} differs across resume", key.id());
        }
    }

    #[test]
    fn config_mismatch_refuses_to_resume()  {
        let cfg = fast_config();
        let dir = tempfile::tempdir().unwrap();
        run_grid(&cfg, &[ModelSelect::Knn], 3, dir.path(), None).unwrap();
        let mut other = cfg.clone();
        other.windows_per_class_per_profile = 7;
        let err = run_grid(&other, &[ModelSelect::Knn], 3, dir.path(), None).unwrap_err();
        assert!(err.to_string().contains("fresh --out"));
    }
}
