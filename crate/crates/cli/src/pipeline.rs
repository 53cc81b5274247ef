//! Assembly of the modeling pipeline (data → basis → surrogates) from a
//! configuration, shared by every subcommand.

use ndarray::Array1;
use sensmap::basis::{fit_pca, BasisExpansion, TruncationCriterion};
use sensmap::errquant::{CovarianceMode, RunConfig};
use sensmap::gp::{FitOptions, GpSurrogate, KernelParams, SamplingMode, VectorGp};
use sensmap::models_io::{
    eval_test_model, lhs_sample, read_design, read_outputs, DesignMatrix, FunctionalOutputs,
    InputSpace, TestModel,
};
use sensmap::pickfreeze::IndexSet;

use crate::config::{CliError, CliResult, PipelineConfig};

pub struct Dataset {
    pub space: InputSpace,
    pub design: DesignMatrix,
    pub outputs: FunctionalOutputs,
}

pub struct Pipeline {
    pub dataset: Dataset,
    pub basis: BasisExpansion,
    pub vgp: VectorGp,
}

pub fn input_space(config: &PipelineConfig) -> CliResult<InputSpace> {
    InputSpace::new(config.space.bounds.iter().map(|b| (b[0], b[1])).collect())
        .map_err(|e| CliError::Config(e.to_string()))
}

/// Load or generate the (design, outputs) pair.
pub fn load_dataset(config: &PipelineConfig) -> CliResult<Dataset> {
    let space = input_space(config)?;
    let data = &config.data;
    let (design, outputs) = if let Some(model_name) = &data.model {
        let m = data.output_dims.expect("validated");
        let model = match model_name.as_str() {
            "additive-sine" => TestModel::AdditiveSine { output_dims: m },
            "interaction" => TestModel::Interaction {
                output_dims: m,
                coupling: data.coupling.unwrap_or(0.5),
            },
            other => return Err(CliError::Config(format!("unknown model `{other}`"))),
        };
        let design = lhs_sample(&space, data.doe_size.expect("validated"), data.doe_seed.unwrap_or(0))?;
        let outputs = eval_test_model(&model, &design)?;
        (design, outputs)
    } else {
        let design = read_design(data.design_csv.as_ref().expect("validated"), &space)?;
        let outputs = read_outputs(data.outputs_csv.as_ref().expect("validated"))?;
        if outputs.n_points() != design.len() {
            return Err(CliError::Config(format!(
                "design has {} rows but outputs have {}",
                design.len(),
                outputs.n_points()
            )));
        }
        (design, outputs)
    };
    Ok(Dataset {
        space,
        design,
        outputs,
    })
}

/// Restrict a dataset to its first `n` rows (nested-prefix DoE subsets).
pub fn dataset_prefix(dataset: &Dataset, n: usize) -> CliResult<Dataset> {
    let design = dataset.design.prefix(n)?;
    let values = dataset
        .outputs
        .values()
        .slice(ndarray::s![..n, ..])
        .to_owned();
    let outputs = FunctionalOutputs::new(values, dataset.outputs.grid().map(|g| g.to_vec()))?;
    Ok(Dataset {
        space: dataset.space.clone(),
        design,
        outputs,
    })
}

pub fn truncation(config: &PipelineConfig) -> TruncationCriterion {
    match config.basis.criterion.as_str() {
        "fixed" => TruncationCriterion::FixedP(config.basis.components.expect("validated")),
        _ => TruncationCriterion::VarianceThreshold(config.basis.threshold),
    }
}

/// Fit the basis and one GP per coefficient (MLE, or fixed hyperparameters
/// when the configuration pins them).
pub fn fit_pipeline(config: &PipelineConfig, dataset: Dataset) -> CliResult<Pipeline> {
    let basis = fit_pca(&dataset.outputs, truncation(config))?;
    let gp = &config.gp;
    let vgp = match (&gp.lengthscales, gp.signal_variance, gp.nugget) {
        (Some(ls), Some(s2), Some(ng)) => {
            let params = KernelParams::new(ls.clone(), s2, ng)?;
            let surrogates = basis
                .coefficients()
                .columns()
                .into_iter()
                .map(|c| {
                    GpSurrogate::with_params(&dataset.design, &Array1::from(c.to_vec()), params.clone())
                })
                .collect::<Result<Vec<_>, _>>()?;
            VectorGp::new(surrogates)?
        }
        (None, None, None) => {
            let options = FitOptions {
                n_starts: gp.n_starts,
                max_evals: gp.max_evals,
                ..FitOptions::default()
            };
            VectorGp::fit(&dataset.design, basis.coefficients().view(), &options)?
        }
        _ => {
            return Err(CliError::Config(
                "gp: fixed hyperparameters need all of lengthscales, signal_variance, nugget"
                    .into(),
            ))
        }
    };
    Ok(Pipeline {
        dataset,
        basis,
        vgp,
    })
}

pub fn sampling_mode(name: &str) -> SamplingMode {
    match name {
        "per-trajectory" => SamplingMode::PerTrajectory,
        _ => SamplingMode::Batch,
    }
}

pub fn covariance_mode(name: &str) -> CovarianceMode {
    match name {
        "fixed" => CovarianceMode::Fixed,
        _ => CovarianceMode::Empirical,
    }
}

pub fn run_config(config: &PipelineConfig) -> RunConfig {
    let run = &config.run;
    RunConfig {
        n_pf: run.n_pf,
        n_traj: run.n_traj,
        n_boot: run.n_boot,
        sampling: sampling_mode(&run.sampling),
        covariance: covariance_mode(&run.covariance),
        seed: run.seed,
        include_total: run.include_total,
    }
}

/// 1-based configuration variables → 0-based core index set.
pub fn index_set(variables: &[usize], dims: usize) -> CliResult<IndexSet> {
    let zero_based: Vec<usize> = variables.iter().map(|&v| v - 1).collect();
    IndexSet::new(zero_based, dims).map_err(|e| CliError::Config(e.to_string()))
}

/// Label used in artifact files: 1-based variables joined by '+'.
pub fn index_set_label(u: &IndexSet) -> String {
    u.indices()
        .iter()
        .map(|i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join("+")
}

/// Estimated resident bytes of batch-mode sampling, for the memory warning.
pub fn batch_memory_estimate(p: usize, n_traj: usize, n_points: usize) -> u64 {
    let trajectories = (p * n_traj * n_points) as u64 * 8;
    let covariance = (n_points as u64).pow(2) * 8;
    trajectories + covariance
}
