//! TOML configuration schema and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Outcome classification for exit codes: configuration problems exit 1,
/// numerical/runtime failures exit 2.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<sensmap::Error> for CliError {
    fn from(e: sensmap::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub space: SpaceConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub gp: GpConfig,
    pub run: RunSection,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub validate: Option<ValidateConfig>,
    /// Output directory; overridable with --out.
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    /// Per-variable [lower, upper] bounds.
    pub bounds: Vec<[f64; 2]>,
}

/// Exactly one data source: a built-in test model evaluated on a fresh
/// Latin hypercube DoE, or a CSV pair (design + functional outputs).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// "additive-sine" or "interaction".
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub output_dims: Option<usize>,
    /// Interaction strength for the "interaction" model.
    #[serde(default)]
    pub coupling: Option<f64>,
    #[serde(default)]
    pub doe_size: Option<usize>,
    #[serde(default)]
    pub doe_seed: Option<u64>,
    #[serde(default)]
    pub design_csv: Option<PathBuf>,
    #[serde(default)]
    pub outputs_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    /// "variance-threshold" (keep `threshold` of the variance) or
    /// "fixed" (keep exactly `components`).
    #[serde(default = "default_basis_criterion")]
    pub criterion: String,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub components: Option<usize>,
}

fn default_basis_criterion() -> String {
    "variance-threshold".into()
}

fn default_threshold() -> f64 {
    0.99
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            criterion: default_basis_criterion(),
            threshold: default_threshold(),
            components: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpConfig {
    #[serde(default = "default_n_starts")]
    pub n_starts: usize,
    #[serde(default = "default_max_evals")]
    pub max_evals: usize,
    /// Fixed hyperparameters (skip maximum-likelihood fitting) when all of
    /// `lengthscales`, `signal_variance`, and `nugget` are given.
    #[serde(default)]
    pub lengthscales: Option<Vec<f64>>,
    #[serde(default)]
    pub signal_variance: Option<f64>,
    #[serde(default)]
    pub nugget: Option<f64>,
}

fn default_n_starts() -> usize {
    8
}

fn default_max_evals() -> usize {
    400
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            n_starts: default_n_starts(),
            max_evals: default_max_evals(),
            lengthscales: None,
            signal_variance: None,
            nugget: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Index sets as 1-based variable lists, e.g. [[1], [2], [1, 2]].
    pub index_sets: Vec<Vec<usize>>,
    #[serde(default)]
    pub include_total: bool,
    pub n_pf: usize,
    pub n_traj: usize,
    pub n_boot: usize,
    /// "batch" or "per-trajectory".
    #[serde(default = "default_sampling")]
    pub sampling: String,
    /// "empirical" or "fixed".
    #[serde(default = "default_covariance")]
    pub covariance: String,
    #[serde(default)]
    pub seed: u64,
    /// Batch-mode memory warning threshold in MiB.
    #[serde(default = "default_memory_budget")]
    pub memory_budget_mb: u64,
}

fn default_sampling() -> String {
    "batch".into()
}

fn default_covariance() -> String {
    "empirical".into()
}

fn default_memory_budget() -> u64 {
    4096
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Nested-prefix DoE sizes (approach 1).
    #[serde(default)]
    pub doe_sizes: Vec<usize>,
    /// Pick-freeze sample sizes (approach 2).
    #[serde(default)]
    pub n_pf_values: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    /// Number of trailing data rows held out for validation.
    #[serde(default)]
    pub count: Option<usize>,
    /// Explicit 1-based validation row indices (alternative to `count`).
    #[serde(default)]
    pub indices: Option<Vec<usize>>,
    /// Explicit 1-based training row indices; defaults to the complement.
    #[serde(default)]
    pub train_indices: Option<Vec<usize>>,
    #[serde(default = "default_validate_traj")]
    pub n_traj: usize,
}

fn default_validate_traj() -> usize {
    100
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        let config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate_shape()?;
        Ok(config)
    }

    fn validate_shape(&self) -> CliResult<()> {
        let d = self.space.bounds.len();
        if d == 0 {
            return Err(CliError::Config("space.bounds must be non-empty".into()));
        }
        let model_source = self.data.model.is_some();
        let csv_source = self.data.design_csv.is_some() || self.data.outputs_csv.is_some();
        match (model_source, csv_source) {
            (true, true) => {
                return Err(CliError::Config(
                    "data: choose either a test model or a CSV pair, not both".into(),
                ))
            }
            (false, false) => {
                return Err(CliError::Config(
                    "data: one of `model` or `design_csv`+`outputs_csv` is required".into(),
                ))
            }
            (true, false) => {
                let name = self.data.model.as_deref().unwrap();
                if !matches!(name, "additive-sine" | "interaction") {
                    return Err(CliError::Config(format!(
                        "data.model: unknown model `{name}` (expected additive-sine or interaction)"
                    )));
                }
                if self.data.output_dims.is_none() || self.data.doe_size.is_none() {
                    return Err(CliError::Config(
                        "data: test models require `output_dims` and `doe_size`".into(),
                    ));
                }
            }
            (false, true) => {
                if self.data.design_csv.is_none() || self.data.outputs_csv.is_none() {
                    return Err(CliError::Config(
                        "data: CSV input needs both `design_csv` and `outputs_csv`".into(),
                    ));
                }
            }
        }
        if self.run.index_sets.is_empty() {
            return Err(CliError::Config("run.index_sets must be non-empty".into()));
        }
        for set in &self.run.index_sets {
            if set.is_empty() {
                return Err(CliError::Config("run.index_sets: empty set".into()));
            }
            for &v in set {
                if v == 0 || v > d {
                    return Err(CliError::Config(format!(
                        "run.index_sets: variable {v} outside 1..={d}"
                    )));
                }
            }
        }
        if !matches!(self.run.sampling.as_str(), "batch" | "per-trajectory") {
            return Err(CliError::Config(format!(
                "run.sampling: `{}` (expected batch or per-trajectory)",
                self.run.sampling
            )));
        }
        if !matches!(self.run.covariance.as_str(), "empirical" | "fixed") {
            return Err(CliError::Config(format!(
                "run.covariance: `{}` (expected empirical or fixed)",
                self.run.covariance
            )));
        }
        if !matches!(self.basis.criterion.as_str(), "variance-threshold" | "fixed") {
            return Err(CliError::Config(format!(
                "basis.criterion: `{}` (expected variance-threshold or fixed)",
                self.basis.criterion
            )));
        }
        if self.basis.criterion == "fixed" && self.basis.components.is_none() {
            return Err(CliError::Config(
                "basis: `fixed` criterion requires `components`".into(),
            ));
        }
        Ok(())
    }
}
