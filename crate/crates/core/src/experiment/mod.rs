//! Config-driven runs: the tabular pipeline, the quadratic critic study and
//! the invariant suites, with their JSON, CSV and SVG artifacts.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod config;
pub mod pipeline;
pub mod study;
pub mod svg;
pub mod verify;

pub use config::{ExperimentConfig, QuadraticConfig};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {cause}")]
    Stage { stage: &'static str, cause: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ExperimentError {
    /// Process exit code: 2 for configuration problems, 3 for failed stages.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            _ => 3,
        }
    }
}

pub(crate) fn stage<E: Display>(stage: &'static str) -> impl FnOnce(E) -> ExperimentError {
    move |e| ExperimentError::Stage { stage, cause: e.to_string() }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

/// A JSON document tagged with the hash of the configuration that produced it.
#[derive(Serialize, Deserialize)]
pub struct Artifact<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(flatten)]
    pub body: T,
}

/// Reads a JSON artifact, with or without a config hash.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    let f = File::open(path).map_err(io_err(path))?;
    let a: Artifact<T> = serde_json::from_reader(BufReader::new(f))
        .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
    Ok(a.body)
}

pub fn save_json<T: Serialize>(path: &Path, config_hash: Option<&str>, body: &T) -> Result<(), ExperimentError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    let a = Artifact { config_hash: config_hash.map(str::to_string), body };
    serde_json::to_writer_pretty(&mut w, &a).map_err(|e| ExperimentError::Io { path: path.into(), source: e.into() })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ExperimentError::Io { path: path.into(), source: e.into() })?;
    let wrap = |e: csv::Error| ExperimentError::Io { path: path.into(), source: e.into() };
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        w.write_record(r).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn ensure_dir(path: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}
