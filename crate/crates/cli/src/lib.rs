//! Experiment orchestration behind the `xsei` command line tool: dataset
//! generation and ingestion, model training runs, sample-time and SNR
//! sweep grids, soft-evaluation reports, and their on-disk formats.
//!
//! Every run derives all randomness from one root seed through labeled
//! sub-seeds, so identical `(config, seed)` pairs reproduce identical
//! bytes, and interrupted grids resume to the same final state.

pub mod config;
pub mod data;
pub mod grid;
pub mod report;
pub mod zoo;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Signal(#[from] xsei_core::signal::SignalError),
    #[error(transparent)]
    Dataset(#[from] xsei_core::signal::dataset::DatasetError),
    #[error(transparent)]
    Feature(#[from] xsei_core::features::FeatureError),
    #[error(transparent)]
    Model(#[from] xsei_core::models::ModelError),
    #[error(transparent)]
    Nn(#[from] xsei_core::nncore::NnError),
    #[error(transparent)]
    Explain(#[from] xsei_core::explain::ExplainError),
    #[error(transparent)]
    Xsei(#[from] xsei_core::xsei::XseiError),
    #[error("config error: {0}")]
    Config(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

pub(crate) fn io_err(path: &std::path::Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}
