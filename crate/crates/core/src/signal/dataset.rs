//! Dataset persistence: a JSON manifest plus one data file holding the
//! window samples and arc masks.
//!
//! Two interchange encodings carry the same information and round-trip
//! losslessly at float32 precision:
//!
//! - `csv` — one row per sample: `window_id,index,current,mask_flag`
//! - `binary` — little-endian: magic `XSEIDS01`, u32 window count, then per
//!   window `u32 id, u32 len, len x f32 samples, u32 span_count,
//!   span_count x (u32 start, u32 len)` run-length arc spans
//!
//! The manifest records schema version, class names, sample period, window
//! geometry, the seeds that produced the data, and per-window id/label/len.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::SignalWindow;

pub const SCHEMA_VERSION: u32 = 1;
const BINARY_MAGIC: &[u8; 8] = b"XSEIDS01";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest parse error: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("unsupported schema version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("manifest sample_period_ms must be positive, got {0}")]
    NonPositivePeriod(f64),
    #[error("data file has wrong magic bytes")]
    BadMagic,
    #[error("record {index}: truncated or corrupt length prefix")]
    TruncatedRecord { index: usize },
    #[error("record {index}: length {found} does not match manifest length {expected}")]
    LengthMismatch {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("record {index}: non-finite sample value")]
    NonFiniteSample { index: usize },
    #[error("record {index}: label {label} outside {classes} classes")]
    BadLabel {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("record {index}: mask span [{start}, {end}) out of bounds")]
    MaskOutOfBounds {
        index: usize,
        start: usize,
        end: usize,
    },
    #[error("record {index}: window id {found} does not match manifest id {expected}")]
    IdMismatch {
        index: usize,
        found: u32,
        expected: u32,
    },
    #[error("csv line {line}: {reason}")]
    BadCsvRow { line: usize, reason: String },
    #[error("window count mismatch: manifest lists {expected}, data holds {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("windows have inconsistent sample periods")]
    InconsistentPeriod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Csv,
    Binary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowMeta {
    pub id: u32,
    pub label: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub class_names: Vec<String>,
    pub sample_period_ms: f64,
    pub window_width: usize,
    pub window_step: usize,
    pub seeds: Vec<u64>,
    /// SNR of injected noise, when the dataset was noise-augmented.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    pub data_format: DataFormat,
    pub data_file: String,
    pub windows: Vec<WindowMeta>,
}

/// Descriptive fields the caller provides when writing a dataset.
#[derive(Debug, Clone)]
pub struct DatasetInfo {
    pub class_names: Vec<String>,
    pub window_width: usize,
    pub window_step: usize,
    pub seeds: Vec<u64>,
    pub snr_db: Option<f64>,
}

/// Write `windows` under `dir` as `manifest.json` plus a data file.
/// Window ids are assigned by position. Returns the manifest path.
pub fn write_dataset(
    dir: &Path,
    info: &DatasetInfo,
    windows: &[SignalWindow],
    format: DataFormat,
) -> Result<PathBuf, DatasetError> {
    let period = windows.first().map(|w| w.sample_period_ms).unwrap_or(5e-3);
    if windows
        .iter()
        .any(|w| (w.sample_period_ms - period).abs() > 1e-15)
    {
        return Err(DatasetError::InconsistentPeriod);
    }

    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let data_file = match format {
        DataFormat::Csv => "windows.csv",
        DataFormat::Binary => "windows.bin",
    };
    let data_path = dir.join(data_file);
    match format {
        DataFormat::Csv => write_csv(&data_path, windows)?,
        DataFormat::Binary => write_binary(&data_path, windows)?,
    }

    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        class_names: info.class_names.clone(),
        sample_period_ms: period,
        window_width: info.window_width,
        window_step: info.window_step,
        seeds: info.seeds.clone(),
        snr_db: info.snr_db,
        data_format: format,
        data_file: data_file.to_string(),
        windows: windows
            .iter()
            .enumerate()
            .map(|(i, w)| WindowMeta {
                id: i as u32,
                label: w.label,
                len: w.len(),
            })
            .collect(),
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&manifest_path, json.as_bytes()).map_err(|e| io_err(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Read and validate a dataset from its manifest path.
pub fn read_dataset(manifest_path: &Path) -> Result<(DatasetManifest, Vec<SignalWindow>), DatasetError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(DatasetError::SchemaVersion {
            found: manifest.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    if manifest.sample_period_ms.is_nan()
        || !manifest.sample_period_ms.is_finite()
        || manifest.sample_period_ms <= 0.0
    {
        return Err(DatasetError::NonPositivePeriod(manifest.sample_period_ms));
    }

    let data_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.data_file);
    let raw = match manifest.data_format {
        DataFormat::Csv => read_csv(&data_path)?,
        DataFormat::Binary => read_binary(&data_path)?,
    };

    if raw.len() != manifest.windows.len() {
        return Err(DatasetError::CountMismatch {
            expected: manifest.windows.len(),
            found: raw.len(),
        });
    }

    let classes = manifest.class_names.len();
    let mut windows = Vec::with_capacity(raw.len());
    for (index, (rec, meta)) in raw.into_iter().zip(&manifest.windows).enumerate() {
        if rec.id != meta.id {
            return Err(DatasetError::IdMismatch {
                index,
                found: rec.id,
                expected: meta.id,
            });
        }
        if rec.samples.len() != meta.len {
            return Err(DatasetError::LengthMismatch {
                index,
                found: rec.samples.len(),
                expected: meta.len,
            });
        }
        if meta.label >= classes {
            return Err(DatasetError::BadLabel {
                index,
                label: meta.label,
                classes,
            });
        }
        if rec.samples.iter().any(|s| !s.is_finite()) {
            return Err(DatasetError::NonFiniteSample { index });
        }
        windows.push(SignalWindow {
            samples: rec.samples,
            sample_period_ms: manifest.sample_period_ms,
            label: meta.label,
            arc_mask: rec.mask,
        });
    }
    Ok((manifest, windows))
}

struct RawRecord {
    id: u32,
    samples: Vec<f64>,
    mask: Vec<bool>,
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_csv(path: &Path, windows: &[SignalWindow]) -> Result<(), DatasetError> {
    let mut out = String::from("window_id,index,current,mask_flag\n");
    for (id, w) in windows.iter().enumerate() {
        for (i, (&x, &m)) in w.samples.iter().zip(&w.arc_mask).enumerate() {
            // store at f32 precision, shortest round-trip formatting
            out.push_str(&format!("{id},{i},{},{}\n", x as f32, u8::from(m)));
        }
    }
    fs::write(path, out.as_bytes()).map_err(|e| io_err(path, e))
}

fn read_csv(path: &Path) -> Result<Vec<RawRecord>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut records: Vec<RawRecord> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line != "window_id,index,current,mask_flag" {
                return Err(DatasetError::BadCsvRow {
                    line: 1,
                    reason: format!("unexpected header `{line}`"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| DatasetError::BadCsvRow {
            line: lineno + 1,
            reason,
        };
        let mut fields = line.split(',');
        let mut next = |name: &str| {
            fields
                .next()
                .ok_or_else(|| bad(format!("missing column {name}")))
        };
        let id: u32 = next("window_id")?
            .parse()
            .map_err(|e| bad(format!("window_id: {e}")))?;
        let idx: usize = next("index")?
            .parse()
            .map_err(|e| bad(format!("index: {e}")))?;
        let current: f32 = next("current")?
            .parse()
            .map_err(|e| bad(format!("current: {e}")))?;
        let flag_raw = next("mask_flag")?;
        let flag = match flag_raw {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("mask_flag must be 0 or 1, got `{other}`"))),
        };

        let fresh = records.last().map(|r| r.id != id).unwrap_or(true);
        if fresh {
            records.push(RawRecord {
                id,
                samples: Vec::new(),
                mask: Vec::new(),
            });
        }
        let rec = records.last_mut().expect("just pushed");
        if idx != rec.samples.len() {
            return Err(bad(format!(
                "sample index {idx} out of order (expected {})",
                rec.samples.len()
            )));
        }
        rec.samples.push(f64::from(current));
        rec.mask.push(flag);
    }
    Ok(records)
}

fn write_binary(path: &Path, windows: &[SignalWindow]) -> Result<(), DatasetError> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(windows.len() as u32).to_le_bytes());
    for (id, w) in windows.iter().enumerate() {
        out.extend_from_slice(&(id as u32).to_le_bytes());
        out.extend_from_slice(&(w.len() as u32).to_le_bytes());
        for &x in &w.samples {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
        let spans = mask_to_spans(&w.arc_mask);
        out.extend_from_slice(&(spans.len() as u32).to_le_bytes());
        for (start, len) in spans {
            out.extend_from_slice(&(start as u32).to_le_bytes());
            out.extend_from_slice(&(len as u32).to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&out).map_err(|e| io_err(path, e))
}

fn read_binary(path: &Path) -> Result<Vec<RawRecord>, DatasetError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() < 12 || &bytes[..8] != BINARY_MAGIC {
        return Err(DatasetError::BadMagic);
    }
    let mut cursor = 8usize;
    let take_u32 = |cursor: &mut usize, index: usize| -> Result<u32, DatasetError> {
        let end = *cursor + 4;
        if end > bytes.len() {
            return Err(DatasetError::TruncatedRecord { index });
        }
        let v = u32::from_le_bytes(bytes[*cursor..end].try_into().expect("4 bytes"));
        *cursor = end;
        Ok(v)
    };

    let count = take_u32(&mut cursor, 0)? as usize;
    let mut records = Vec::with_capacity(count);
    for index in 0..count {
        let id = take_u32(&mut cursor, index)?;
        let len = take_u32(&mut cursor, index)? as usize;
        let end = cursor
            .checked_add(len * 4)
            .filter(|&e| e <= bytes.len())
            .ok_or(DatasetError::TruncatedRecord { index })?;
        let mut samples = Vec::with_capacity(len);
        while cursor < end {
            let v = f32::from_le_bytes(bytes[cursor..cursor + 4].try_into().expect("4 bytes"));
            samples.push(f64::from(v));
            cursor += 4;
        }
        let span_count = take_u32(&mut cursor, index)? as usize;
        let mut mask = vec![false; len];
        for _ in 0..span_count {
            let start = take_u32(&mut cursor, index)? as usize;
            let span_len = take_u32(&mut cursor, index)? as usize;
            let span_end = start
                .checked_add(span_len)
                .ok_or(DatasetError::TruncatedRecord { index })?;
            if span_end > len {
                return Err(DatasetError::MaskOutOfBounds {
                    index,
                    start,
                    end: span_end,
                });
            }
            for flag in mask.iter_mut().take(span_end).skip(start) {
                *flag = true;
            }
        }
        records.push(RawRecord { id, samples, mask });
    }
    Ok(records)
}

fn mask_to_spans(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, &f) in mask.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i - s));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, mask.len() - s));
    }
    spans
}
