//! `xsei` — synthesize arc-fault datasets, train the model zoo, attribute
//! decisions, and score feature-extraction fidelity.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xsei_cli::config::ExperimentConfig;
use xsei_cli::data::{
    background_indices, build_base_dataset, build_explanation_sets, derive_cell_windows,
    explain_sample_indices, CellData,
};
use xsei_cli::grid::{evaluate_cell, run_grid, CellKey};
use xsei_cli::report::{collect_rows, emit_all, emit_csv, emit_plotdata, emit_text, load_reports};
use xsei_cli::zoo::{train_zoo, ModelSelect};
use xsei_cli::HarnessError;

use xsei_core::explain::{
    explain_features, occlude, occlude_with_reference, write_attribution_csv,
    write_occlusion_csv, OcclusionBaseline, RemovalStrategy, ShapleyAttribution,
};
use xsei_core::models::{
    accuracy, load_model, save_model, EvalSet, ModelFamily, ModelInput, TrainedModel,
};
use xsei_core::nncore::argmax;
use xsei_core::nncore::train::write_loss_curve;
use xsei_core::seed::derive_seed;
use xsei_core::signal::dataset::{read_dataset, write_dataset, DataFormat, DatasetInfo};
use xsei_core::xsei::ground_truth_regions_pairwise;

#[derive(Parser)]
#[command(
    name = "xsei",
    version,
    about = "Soft evaluation of arc-fault classifiers: synthetic datasets, model zoo, attribution, Jaccard scores"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config JSON; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; falls back to $XSEI_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled dataset at a chosen sample-time factor and SNR.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        out: PathBuf,
        /// Decimation factor relative to the native rate.
        #[arg(long, default_value_t = 1)]
        factor: usize,
        /// Injected noise SNR in dB; omit for a clean dataset.
        #[arg(long)]
        snr: Option<f64>,
        /// Data encoding: csv or binary.
        #[arg(long, default_value = "binary")]
        format: String,
    },
    /// Validate a dataset directory and print a summary.
    Ingest {
        /// Dataset directory or manifest path.
        #[arg(long)]
        data: PathBuf,
    },
    /// Train selected models on a dataset.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated model names; defaults to the config selection.
        #[arg(long)]
        models: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report test accuracy of trained models on a dataset.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        models_dir: PathBuf,
    },
    /// Attribute one model's decisions (Shapley or occlusion).
    Explain {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        models_dir: PathBuf,
        /// Model name (checkpoint stem) to explain.
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
        /// Occlusion region count override.
        #[arg(long)]
        regions: Option<usize>,
        /// Feature removal strategy: baseline, random, or marginal.
        #[arg(long)]
        removal: Option<String>,
    },
    /// Soft-evaluate trained models: accuracy plus Jaccard score per model.
    Score {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        models_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        regions: Option<usize>,
        #[arg(long)]
        removal: Option<String>,
        /// Region responsibility threshold override.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run the sample-time x SNR x seed experiment grid.
    Grid {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated decimation factors (e.g. 1,2,5,10,20).
        #[arg(long)]
        sample_times: Option<String>,
        /// Comma-separated SNR values in dB.
        #[arg(long, allow_hyphen_values = true)]
        snrs: Option<String>,
        #[arg(long)]
        models: Option<String>,
        #[arg(long)]
        regions: Option<usize>,
        #[arg(long)]
        removal: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Re-emit reports from a finished grid directory.
    Report {
        /// Grid output directory holding manifest.json.
        #[arg(long)]
        reports: PathBuf,
        /// csv, text, or plotdata.
        #[arg(long, default_value = "text")]
        format: String,
        /// Output directory; text goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("XSEI_SEED")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(0)
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, HarnessError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn parse_removal(s: &str) -> Result<RemovalStrategy, HarnessError> {
    match s {
        "baseline" => Ok(RemovalStrategy::Baseline),
        "random" => Ok(RemovalStrategy::RandomSample),
        "marginal" => Ok(RemovalStrategy::Marginal),
        other => Err(HarnessError::Config(format!(
            "unknown removal strategy `{other}` (expected baseline, random, or marginal)"
        ))),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, HarnessError> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|_| HarnessError::Config(format!("bad {what} entry `{tok}`")))
        })
        .collect()
}

fn manifest_path_of(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("manifest.json")
    } else {
        data.to_path_buf()
    }
}

/// Load a dataset directory into a prepared cell: features extracted,
/// split derived from the seed recorded in the manifest.
fn load_cell(
    cfg: &ExperimentConfig,
    data: &Path,
) -> Result<(CellData, Option<f64>, usize), HarnessError> {
    let (manifest, windows) = read_dataset(&manifest_path_of(data))?;
    let split_seed = manifest.seeds.last().copied().unwrap_or(0);
    let pool = xsei_core::features::FeaturePool::default_pool();
    let features = windows
        .iter()
        .map(|w| xsei_core::features::extract(w, &pool))
        .collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<usize> = windows.iter().map(|w| w.label).collect();
    let (train_idx, val_idx, test_idx) =
        xsei_cli::data::split_indices(windows.len(), &cfg.split, split_seed);
    let sample_period_ms = manifest.sample_period_ms;
    let base_period = cfg
        .profiles
        .first()
        .map(|p| p.sample_period_ms)
        .unwrap_or(5e-3);
    let factor = (sample_period_ms / base_period).round() as usize;
    Ok((
        CellData {
            windows,
            features,
            labels,
            pool,
            train_idx,
            val_idx,
            test_idx,
            sample_period_ms,
        },
        manifest.snr_db,
        factor.max(1),
    ))
}

fn load_models_dir(dir: &Path) -> Result<Vec<TrainedModel>, HarnessError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "model").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(HarnessError::Other(format!(
            "no .model checkpoints found in {}",
            dir.display()
        )));
    }
    paths.iter().map(|p| Ok(load_model(p)?)).collect()
}

fn selection_of(
    cfg: &ExperimentConfig,
    flag: &Option<String>,
) -> Result<Vec<ModelSelect>, HarnessError> {
    match flag {
        Some(list) => {
            let names: Vec<String> = list.split(',').map(|s| s.trim().to_string()).collect();
            ModelSelect::parse_list(&names)
        }
        None => ModelSelect::parse_list(&cfg.models),
    }
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Synth {
            common,
            out,
            factor,
            snr,
            format,
        } => {
            let cfg = load_config(&common.config)?;
            cfg.validate()?;
            let seed = resolve_seed(common.seed);
            let format = match format.as_str() {
                "csv" => DataFormat::Csv,
                "binary" => DataFormat::Binary,
                other => {
                    return Err(HarnessError::Config(format!(
                        "unknown dataset format `{other}`"
                    )))
                }
            };
            let base = build_base_dataset(&cfg, seed)?;
            let cell_seed = derive_seed(seed, &format!("synth-cli/t{factor}"));
            let windows = derive_cell_windows(&base, factor, snr, cell_seed)?;
            let info = DatasetInfo {
                class_names: cfg.class_names.clone(),
                window_width: cfg.window_width / factor.max(1),
                window_step: cfg.window_step / factor.max(1),
                seeds: vec![seed, cell_seed],
                snr_db: snr,
            };
            let manifest = write_dataset(&out, &info, &windows, format)?;
            println!(
                "wrote {} windows ({} classes) to {}",
                windows.len(),
                cfg.class_names.len(),
                manifest.display()
            );
            Ok(())
        }

        Command::Ingest { data } => {
            let (manifest, windows) = read_dataset(&manifest_path_of(&data))?;
            let mut counts = vec![0usize; manifest.class_names.len()];
            for w in &windows {
                counts[w.label] += 1;
            }
            println!(
                "dataset ok: {} windows, sample period {} ms, snr {}",
                windows.len(),
                manifest.sample_period_ms,
                manifest
                    .snr_db
                    .map(|v| format!("{v} dB"))
                    .unwrap_or_else(|| "clean".to_string()),
            );
            for (name, count) in manifest.class_names.iter().zip(&counts) {
                println!("  class {name}: {count} windows");
            }
            Ok(())
        }

        Command::Train {
            common,
            data,
            models,
            out,
        } => {
            let cfg = load_config(&common.config)?;
            let seed = resolve_seed(common.seed);
            let selection = selection_of(&cfg, &models)?;
            let (cell, _, _) = load_cell(&cfg, &data)?;
            let zoo = train_zoo(&selection, &cell, &cfg, seed)?;
            std::fs::create_dir_all(&out).map_err(|e| HarnessError::Io {
                path: out.clone(),
                source: e,
            })?;
            for model in &zoo.models {
                let path = out.join(format!("{}.model", model.name()));
                save_model(model, &path)?;
                println!("saved {}", path.display());
            }
            for (name, curve) in &zoo.curves {
                let path = out.join(format!("{name}-curve.csv"));
                write_loss_curve(&path, curve).map_err(|e| HarnessError::Io {
                    path: path.clone(),
                    source: e,
                })?;
            }
            Ok(())
        }

        Command::Eval {
            common,
            data,
            models_dir,
        } => {
            let cfg = load_config(&common.config)?;
            let (cell, _, _) = load_cell(&cfg, &data)?;
            let models = load_models_dir(&models_dir)?;
            let test_features = cell.select_features(&cell.test_idx);
            let test_windows = cell.select_windows(&cell.test_idx);
            let test_labels = cell.select_labels(&cell.test_idx);
            println!("{:<12} {:>9}", "model", "accuracy");
            for model in &models {
                let acc = match model.family() {
                    ModelFamily::FeaturePool => {
                        accuracy(model, EvalSet::Features(&test_features), &test_labels)?
                    }
                    ModelFamily::RawSignal => {
                        accuracy(model, EvalSet::Windows(&test_windows), &test_labels)?
                    }
                };
                println!("{:<12} {:>8.2}%", model.name(), acc * 100.0);
            }
            Ok(())
        }

        Command::Explain {
            common,
            data,
            models_dir,
            model,
            out,
            regions,
            removal,
        } => {
            let mut cfg = load_config(&common.config)?;
            if let Some(n) = regions {
                cfg.explain.regions = n;
            }
            if let Some(r) = &removal {
                cfg.explain.removal = parse_removal(r)?;
            }
            let seed = resolve_seed(common.seed);
            let (cell, snr_db, factor) = load_cell(&cfg, &data)?;
            let path = models_dir.join(format!("{model}.model"));
            let trained = load_model(&path)?;
            std::fs::create_dir_all(&out).map_err(|e| HarnessError::Io {
                path: out.clone(),
                source: e,
            })?;

            match trained.family() {
                ModelFamily::FeaturePool => {
                    let explain_idx =
                        explain_sample_indices(&cell.test_idx, cfg.explain.shap_samples, seed);
                    let bg_idx =
                        background_indices(&cell.train_idx, cfg.explain.background_rows, seed);
                    let background = cell.select_features(&bg_idx);
                    let mut phis = vec![0.0f64; cell.pool.d()];
                    let mut count = 0usize;
                    for (i, &idx) in explain_idx.iter().enumerate() {
                        let sample = &cell.features[idx];
                        let target = argmax(&trained.predict(ModelInput::Features(sample))?);
                        let attribution = explain_features(
                            &trained,
                            sample,
                            target,
                            cfg.explain.removal,
                            &background,
                            derive_seed(seed, &format!("explain/{i}")),
                        )?;
                        for (acc, phi) in phis.iter_mut().zip(&attribution.phi) {
                            *acc += phi.abs();
                        }
                        count += 1;
                    }
                    for phi in &mut phis {
                        *phi /= count.max(1) as f64;
                    }
                    let summary = ShapleyAttribution {
                        phi: phis,
                        target_class: 0,
                        base_value: 0.0,
                    };
                    let csv = out.join(format!("{model}-shap.csv"));
                    write_attribution_csv(&csv, &cell.pool, &summary)?;
                    println!("wrote {}", csv.display());
                }
                ModelFamily::RawSignal => {
                    let profile = &cfg.profiles[cfg.explain.explain_profile_index];
                    let sets = build_explanation_sets(&cfg, profile, factor, snr_db, seed)?;
                    let set = &sets[0];
                    let win = &set.windows[0];
                    let target = set.base_window.label;
                    let map = if cfg.explain.occlusion_baseline == OcclusionBaseline::Reference {
                        occlude_with_reference(
                            &trained,
                            win,
                            &set.normal_window.samples,
                            target,
                            cfg.explain.regions,
                        )?
                    } else {
                        occlude(
                            &trained,
                            win,
                            target,
                            cfg.explain.regions,
                            cfg.explain.occlusion_baseline,
                            derive_seed(seed, "occlusion"),
                        )?
                    };
                    let csv = out.join(format!("{model}-occlusion.csv"));
                    write_occlusion_csv(&csv, &map)?;
                    // pairwise ground truth is available from the twin
                    let _ = ground_truth_regions_pairwise(
                        &set.normal_window,
                        &set.base_window,
                        cfg.explain.regions,
                        cfg.explain.pairwise_tolerance,
                    )?;
                    println!("wrote {}", csv.display());
                }
            }
            Ok(())
        }

        Command::Score {
            common,
            data,
            models_dir,
            out,
            regions,
            removal,
            threshold,
        } => {
            let mut cfg = load_config(&common.config)?;
            if let Some(n) = regions {
                cfg.explain.regions = n;
            }
            if let Some(r) = &removal {
                cfg.explain.removal = parse_removal(r)?;
            }
            if let Some(t) = threshold {
                cfg.explain.res_threshold = t;
            }
            let seed = resolve_seed(common.seed);
            let (cell, snr_db, factor) = load_cell(&cfg, &data)?;
            let models = load_models_dir(&models_dir)?;
            let key = CellKey {
                factor,
                snr_db,
                seed_index: 0,
            };
            let mut report = evaluate_cell(&cfg, &cell, &models, key, seed)?;
            report.sample_period_ms = Some(cell.sample_period_ms);
            report.snr_db = snr_db;

            std::fs::create_dir_all(&out).map_err(|e| HarnessError::Io {
                path: out.clone(),
                source: e,
            })?;
            let json_path = out.join("report.json");
            std::fs::write(&json_path, serde_json::to_string_pretty(&report)?).map_err(|e| {
                HarnessError::Io {
                    path: json_path.clone(),
                    source: e,
                }
            })?;
            let pairs = vec![(key, report)];
            let rows = collect_rows(&pairs);
            std::fs::write(out.join("report.csv"), emit_csv(&rows)).map_err(|e| {
                HarnessError::Io {
                    path: out.join("report.csv"),
                    source: e,
                }
            })?;
            let text = emit_text(&pairs);
            std::fs::write(out.join("report.txt"), &text).map_err(|e| HarnessError::Io {
                path: out.join("report.txt"),
                source: e,
            })?;
            emit_plotdata(&pairs, &out)?;
            print!("{text}");
            Ok(())
        }

        Command::Grid {
            common,
            out,
            sample_times,
            snrs,
            models,
            regions,
            removal,
            threshold,
        } => {
            let mut cfg = load_config(&common.config)?;
            if let Some(list) = &sample_times {
                cfg.sample_time_factors = parse_list(list, "sample-time factor")?;
            }
            if let Some(list) = &snrs {
                cfg.snr_dbs = parse_list::<f64>(list, "snr")?.into_iter().map(Some).collect();
            }
            if let Some(n) = regions {
                cfg.explain.regions = n;
            }
            if let Some(r) = &removal {
                cfg.explain.removal = parse_removal(r)?;
            }
            if let Some(t) = threshold {
                cfg.explain.res_threshold = t;
            }
            let selection = selection_of(&cfg, &models)?;
            let seed = resolve_seed(common.seed);
            let outcome = run_grid(&cfg, &selection, seed, &out, None)?;
            emit_all(&outcome.reports, &out)?;
            let done = outcome
                .manifest
                .cells
                .values()
                .filter(|c| c.status == xsei_cli::grid::CellStatus::Done)
                .count();
            let failed = outcome.manifest.cells.len() - done;
            println!(
                "grid complete: {done} cells done, {failed} failed, reports in {}",
                out.display()
            );
            print!("{}", emit_text(&outcome.reports));
            Ok(())
        }

        Command::Report {
            reports,
            format,
            out,
        } => {
            let pairs = load_reports(&reports)?;
            match format.as_str() {
                "text" => {
                    let text = emit_text(&pairs);
                    match out {
                        Some(dir) => {
                            std::fs::create_dir_all(&dir).map_err(|e| HarnessError::Io {
                                path: dir.clone(),
                                source: e,
                            })?;
                            let path = dir.join("report.txt");
                            std::fs::write(&path, text).map_err(|e| HarnessError::Io {
                                path,
                                source: e,
                            })?;
                        }
                        None => print!("{text}"),
                    }
                }
                "csv" => {
                    let csv = emit_csv(&collect_rows(&pairs));
                    match out {
                        Some(dir) => {
                            std::fs::create_dir_all(&dir).map_err(|e| HarnessError::Io {
                                path: dir.clone(),
                                source: e,
                            })?;
                            let path = dir.join("report.csv");
                            std::fs::write(&path, csv).map_err(|e| HarnessError::Io {
                                path,
                                source: e,
                            })?;
                        }
                        None => print!("{csv}"),
                    }
                }
                "plotdata" => {
                    let dir = out.ok_or_else(|| {
                        HarnessError::Config("plotdata requires --out".to_string())
                    })?;
                    emit_plotdata(&pairs, &dir)?;
                }
                other => {
                    return Err(HarnessError::Config(format!(
                        "unknown report format `{other}`"
                    )))
                }
            }
            Ok(())
        }
    }
}
