//! Report emission: machine-readable CSV, an aligned text table with
//! per-row averages, and plot-ready attribution series.

use std::path::{Path, PathBuf};

use xsei_core::xsei::{ScoreMethod, XseiReport};

use crate::grid::CellKey;
use crate::{io_err, HarnessError};

/// One flattened result line: a model evaluated in one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub family: String,
    pub sample_time_ms: Option<f64>,
    pub snr_db: Option<f64>,
    pub seed_index: usize,
    pub accuracy: Option<f64>,
    pub score: Option<f64>,
    pub score_numerator: Option<usize>,
    pub score_denominator: Option<usize>,
    pub method: Option<String>,
    pub error: Option<String>,
}

pub fn collect_rows(reports: &[(CellKey, XseiReport)]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for (key, report) in reports {
        for row in &report.rows {
            rows.push(ReportRow {
                model: row.name.clone(),
                family: row.family.to_string(),
                sample_time_ms: report.sample_period_ms,
                snr_db: report.snr_db,
                seed_index: key.seed_index,
                accuracy: row.accuracy,
                score: row.score.map(|s| s.value),
                score_numerator: row.score.map(|s| s.numerator),
                score_denominator: row.score.map(|s| s.denominator),
                method: row.score.map(|s| {
                    match s.method {
                        ScoreMethod::ShapTopK => "shap_top_k",
                        ScoreMethod::Occlusion => "occlusion",
                    }
                    .to_string()
                }),
                error: row.error.clone(),
            });
        }
    }
    rows
}

const CSV_HEADER: &str =
    "model,family,sample_time_ms,snr_db,seed,accuracy,score,score_num,score_den,method,error";

fn opt_num<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// Long-format CSV; `emit_csv(parse_csv(x)) == x` byte for byte.
pub fn emit_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let error = match &r.error {
            Some(e) => format!("\"{}\"", e.replace('"', "\"\"")),
            None => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.model,
            r.family,
            opt_num(&r.sample_time_ms),
            opt_num(&r.snr_db),
            r.seed_index,
            opt_num(&r.accuracy),
            opt_num(&r.score),
            opt_num(&r.score_numerator),
            opt_num(&r.score_denominator),
            r.method.clone().unwrap_or_default(),
            error,
        ));
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>, HarnessError> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line != CSV_HEADER {
                return Err(HarnessError::Other(format!(
                    "unexpected report header `{line}`"
                )));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() != 11 {
            return Err(HarnessError::Other(format!(
                "report line {} has {} fields, expected 11",
                lineno + 1,
                fields.len()
            )));
        }
        let parse_f64 = |s: &str| -> Result<Option<f64>, HarnessError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| HarnessError::Other(format!("line {}: {e}", lineno + 1)))
            }
        };
        let parse_usize = |s: &str| -> Result<Option<usize>, HarnessError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<usize>()
                    .map(Some)
                    .map_err(|e| HarnessError::Other(format!("line {}: {e}", lineno + 1)))
            }
        };
        rows.push(ReportRow {
            model: fields[0].clone(),
            family: fields[1].clone(),
            sample_time_ms: parse_f64(&fields[2])?,
            snr_db: parse_f64(&fields[3])?,
            seed_index: fields[4]
                .parse()
                .map_err(|e| HarnessError::Other(format!("line {}: {e}", lineno + 1)))?,
            accuracy: parse_f64(&fields[5])?,
            score: parse_f64(&fields[6])?,
            score_numerator: parse_usize(&fields[7])?,
            score_denominator: parse_usize(&fields[8])?,
            method: (!fields[9].is_empty()).then(|| fields[9].clone()),
            error: (!fields[10].is_empty()).then(|| fields[10].clone()),
        });
    }
    Ok(rows)
}

/// Minimal CSV splitter honoring double-quoted final fields.
fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if current.is_empty() && !quoted => quoted = true,
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    current.push('"');
                } else {
                    quoted = false;
                }
            }
            ',' if !quoted => {
                fields.push(std::mem::take(&mut current));
            }
            c => current.push(c),
        }
    }
    fields.push(current);
    fields
}

/// Mean accuracy and score over the cells a model actually produced.
pub fn row_average(cells: &[(Option<f64>, Option<f64>)]) -> (Option<f64>, Option<f64>) {
    let accs: Vec<f64> = cells.iter().filter_map(|(a, _)| *a).collect();
    let scores: Vec<f64> = cells.iter().filter_map(|(_, s)| *s).collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    (mean(&accs), mean(&scores))
}

/// Aligned text table: one block per seed repetition, rows are models,
/// one `Acc / Score` column pair per grid cell, and a trailing average
/// pair over the row.
pub fn emit_text(reports: &[(CellKey, XseiReport)]) -> String {
    let mut seeds: Vec<usize> = reports.iter().map(|(k, _)| k.seed_index).collect();
    seeds.sort_unstable();
    seeds.dedup();

    let mut out = String::new();
    for seed in seeds {
        let cells: Vec<&(CellKey, XseiReport)> = reports
            .iter()
            .filter(|(k, _)| k.seed_index == seed)
            .collect();
        if cells.is_empty() {
            continue;
        }

        // model order: first appearance across the seed's cells
        let mut models: Vec<String> = Vec::new();
        for (_, report) in &cells {
            for row in &report.rows {
                if !models.contains(&row.name) {
                    models.push(row.name.clone());
                }
            }
        }

        let labels: Vec<String> = cells
            .iter()
            .map(|(k, r)| {
                let time = r
                    .sample_period_ms
                    .map(|t| format!("t={t}ms"))
                    .unwrap_or_else(|| format!("f={}", k.factor));
                match r.snr_db {
                    Some(snr) => format!("{time} snr={snr}"),
                    None => format!("{time} clean"),
                }
            })
            .collect();

        let mut table: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["Model".to_string()];
        header.extend(labels.iter().map(|l| format!("{l} (Acc/Score)")));
        header.push("Average (Acc/Score)".to_string());
        table.push(header);

        for model in &models {
            let mut line = vec![model.clone()];
            let mut pairs = Vec::new();
            for (_, report) in &cells {
                let row = report.rows.iter().find(|r| &r.name == model);
                let (acc, score) = match row {
                    Some(r) => (r.accuracy, r.score.map(|s| s.value)),
                    None => (None, None),
                };
                pairs.push((acc, score));
                line.push(format_pair(acc, score));
            }
            let (avg_acc, avg_score) = row_average(&pairs);
            line.push(format_pair(avg_acc, avg_score));
            table.push(line);
        }

        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        out.push_str(&format!("Seed {seed}\n"));
        for (i, row) in table.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            out.push_str(&line.join("  "));
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out
}

fn format_pair(acc: Option<f64>, score: Option<f64>) -> String {
    let a = acc
        .map(|v| format!("{:.2}%", v * 100.0))
        .unwrap_or_else(|| "--".to_string());
    let s = score
        .map(|v| format!("{v:.2}"))
        .unwrap_or_else(|| "--".to_string());
    format!("{a} / {s}")
}

/// Per-model attribution series for external plotting: one directory per
/// cell holding `<model>-shap.csv` and `<model>-occlusion.csv`.
pub fn emit_plotdata(
    reports: &[(CellKey, XseiReport)],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::new();
    for (key, report) in reports {
        let cell_dir = out_dir.join("plotdata").join(key.id());
        std::fs::create_dir_all(&cell_dir).map_err(|e| io_err(&cell_dir, e))?;
        for row in &report.rows {
            if let Some(summary) = &row.shap_summary {
                let mut csv = String::from("feature,mean_abs_phi\n");
                for (feature, phi) in summary {
                    csv.push_str(&format!("{},{}\n", feature.name(), phi));
                }
                let path = cell_dir.join(format!("{}-shap.csv", row.name));
                std::fs::write(&path, csv).map_err(|e| io_err(&path, e))?;
                written.push(path);
            }
            if let Some(series) = &row.occlusion_series {
                let mut csv = String::from("region_start,region_end,mean_res\n");
                for (start, end, res) in series {
                    csv.push_str(&format!("{start},{end},{res}\n"));
                }
                let path = cell_dir.join(format!("{}-occlusion.csv", row.name));
                std::fs::write(&path, csv).map_err(|e| io_err(&path, e))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// Load per-cell report JSON files back from a grid output directory.
pub fn load_reports(out_dir: &Path) -> Result<Vec<(CellKey, XseiReport)>, HarnessError> {
    let manifest = crate::grid::RunManifest::load(&out_dir.join("manifest.json"))?;
    let mut reports = Vec::new();
    for record in manifest.cells.values() {
        if let Some(file) = &record.report_file {
            let path = out_dir.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            reports.push((record.key, serde_json::from_str(&text)?));
        }
    }
    Ok(reports)
}

/// Write all three formats next to the manifest.
pub fn emit_all(
    reports: &[(CellKey, XseiReport)],
    out_dir: &Path,
) -> Result<(), HarnessError> {
    let rows = collect_rows(reports);
    let csv_path = out_dir.join("report.csv");
    std::fs::write(&csv_path, emit_csv(&rows)).map_err(|e| io_err(&csv_path, e))?;
    let text_path = out_dir.join("report.txt");
    std::fs::write(&text_path, emit_text(reports)).map_err(|e| io_err(&text_path, e))?;
    emit_plotdata(reports, out_dir)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use xsei_core::xsei::{ModelReport, Provenance, SoftScore};

    fn fake_report() -> Vec<(CellKey, XseiReport)> {
        use xsei_core::explain::{OcclusionBaseline, RemovalStrategy};
        use xsei_core::models::ModelFamily;
        let provenance = Provenance {
            seed: 1,
            removal: RemovalStrategy::Baseline,
            occlusion_baseline: OcclusionBaseline::Blur,
            region_count: 4,
            res_threshold: 0.1,
            top_k: 5,
        };
        let score = SoftScore {
            value: 2.0 / 3.0,
            numerator: 4,
            denominator: 6,
            method: ScoreMethod::ShapTopK,
        };
        let rows = vec![
            ModelReport {
                name: "knn".to_string(),
                family: ModelFamily::FeaturePool,
                accuracy: Some(0.9375),
                score: Some(score),
                error: None,
                shap_summary: None,
                top_features: None,
                occlusion_series: Some(vec![(0, 2, 0.5), (2, 4, 0.125)]),
            },
            ModelReport {
                name: "lbnn-avg".to_string(),
                family: ModelFamily::RawSignal,
                accuracy: None,
                score: None,
                error: Some("window length 7, expected 9".to_string()),
                shap_summary: None,
                top_features: None,
                occlusion_series: None,
            },
        ];
        vec![(
            CellKey {
                factor: 5,
                snr_db: Some(5.0),
                seed_index: 0,
            },
            XseiReport {
                sample_period_ms: Some(2.5e-2),
                snr_db: Some(5.0),
                rows,
                provenance,
            },
        )]
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let rows = collect_rows(&fake_report());
        let emitted = emit_csv(&rows);
        let parsed = parse_csv(&emitted).unwrap();
        assert_eq!(parsed, rows);
        let re_emitted = emit_csv(&parsed);
        assert_eq!(emitted, re_emitted);
    }

    #[test]
    fn text_table_row_count_is_models_plus_headers() {
        let text = emit_text(&fake_report());
        // seed line + header + rule + two model rows
        let lines: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("Seed 0"));
        assert!(lines[3].starts_with("knn"));
    }

    #[test]
    fn averages_are_exact_row_means() {
        let cells = vec![
            (Some(0.9), Some(0.5)),
            (Some(0.8), Some(0.25)),
            (Some(1.0), None),
        ];
        let (acc, score) = row_average(&cells);
        assert!((acc.unwrap() - 0.9).abs() < 1e-12);
        assert!((score.unwrap() - 0.375).abs() < 1e-12);
    }

    #[test]
    fn plotdata_series_lengths_match_regions() {
        let dir = tempfile::tempdir().unwrap();
        let written = emit_plotdata(&fake_report(), dir.path()).unwrap();
        assert_eq!(written.len(), 1);
        let text = std::fs::read_to_string(&written[0]).unwrap();
        assert_eq!(text.lines().count(), 3); // header + 2 regions
    }

    #[test]
    fn quoted_errors_survive_the_round_trip() {
        let mut rows = collect_rows(&fake_report());
        rows[1].error = Some("contains, comma and \"quotes\"".to_string());
        let emitted = emit_csv(&rows);
        let parsed = parse_csv(&emitted).unwrap();
        assert_eq!(parsed[1].error, rows[1].error);
        assert_eq!(emit_csv(&parsed), emitted);
    }
}
