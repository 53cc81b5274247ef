//! CSV/JSON artifact writers.

use std::path::{Path, PathBuf};

use sensmap::errquant::BoxplotSummary;

use crate::config::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Numerical(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_file(path: &Path, content: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, content)
        .map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", path.display())))
}

/// Numeric cell formatting: shortest round-trip form, `nan` for missing.
pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

pub fn summary_cells(s: &BoxplotSummary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        s.n,
        s.n_missing,
        fmt(s.median),
        fmt(s.q1),
        fmt(s.q3),
        fmt(s.whisker_low),
        fmt(s.whisker_high),
        fmt(s.p5),
        fmt(s.p95),
        s.n_outliers
    )
}

pub const SUMMARY_HEADER: &str =
    "n,n_missing,median,q1,q3,whisker_low,whisker_high,p5,p95,n_outliers";

/// Collects artifact paths for the manifest.
#[derive(Default)]
pub struct ArtifactList {
    pub paths: Vec<PathBuf>,
}

impl ArtifactList {
    pub fn add(&mut self, path: PathBuf) -> PathBuf {
        self.paths.push(path.clone());
        path
    }

    pub fn names(&self) -> Vec<String> {
        self.paths
            .iter()
            .map(|p| p.display().to_string())
            .collect()
    }
}
