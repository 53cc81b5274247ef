//! Surrogate accuracy assessment with the Q² (Nash-Sutcliffe) score,
//! evaluated per output dimension over GP trajectories.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use crate::basis::BasisExpansion;
use crate::gp::{sample_trajectories, SamplingMode, VectorGp};
use crate::models_io::{DesignMatrix, FunctionalOutputs};
use crate::{Error, Result};

/// Q² = 1 − Σ(obs − pred)² / Σ(obs − mean(obs))². 1 means exact
/// prediction, 0 means no better than the observed mean.
pub fn q2(predicted: ArrayView1<f64>, observed: ArrayView1<f64>) -> Result<f64> {
    if predicted.len() != observed.len() {
        return Err(Error::DimensionMismatch {
            expected: observed.len(),
            actual: predicted.len(),
            context: "predictions vs observations",
        });
    }
    if observed.len() < 2 {
        return Err(Error::InvalidDesign(
            "Q² needs at least two validation points".into(),
        ));
    }
    let mean = observed.mean().expect("non-empty observations");
    let sst: f64 = observed.iter().map(|&o| (o - mean) * (o - mean)).sum();
    if sst <= 0.0 {
        return Err(Error::UndefinedQ2(
            "observed values are constant on the validation set".into(),
        ));
    }
    let sse: f64 = predicted
        .iter()
        .zip(observed.iter())
        .map(|(&p, &o)| (o - p) * (o - p))
        .sum();
    Ok(1.0 - sse / sst)
}

/// Per-dimension Q² scores over GP trajectories, with percentile curves.
#[derive(Debug, Clone)]
pub struct Q2Report {
    /// Q² per (trajectory, output dimension), shape (N_Z, m).
    pub scores: Array2<f64>,
    /// 5th percentile per dimension.
    pub p5: Array1<f64>,
    /// Median per dimension.
    pub p50: Array1<f64>,
    /// 95th percentile per dimension.
    pub p95: Array1<f64>,
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
    }
}

/// Sample `n_traj` trajectories at the validation points, reconstruct the
/// per-dimension predictions through the basis, and score each
/// (trajectory, dimension) pair against the validation outputs.
pub fn q2_trajectory_report(
    vgp: &VectorGp,
    basis: &BasisExpansion,
    validation_design: &DesignMatrix,
    validation_outputs: &FunctionalOutputs,
    n_traj: usize,
    seed: u64,
) -> Result<Q2Report> {
    let v = validation_design.len();
    let m = basis.output_dims();
    if validation_outputs.n_points() != v {
        return Err(Error::DimensionMismatch {
            expected: v,
            actual: validation_outputs.n_points(),
            context: "validation outputs vs validation design",
        });
    }
    if validation_outputs.output_dims() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: validation_outputs.output_dims(),
            context: "validation outputs vs basis dimension",
        });
    }
    let batch = sample_trajectories(
        vgp,
        validation_design.points().view(),
        n_traj,
        SamplingMode::Batch,
        seed,
    )?;
    let observed = validation_outputs.values();
    let mut scores = Array2::zeros((n_traj, m));
    for j in 0..n_traj {
        let coeffs = batch.values().index_axis(Axis(0), j);
        let predicted = basis.reconstruct(&coeffs.to_owned())?;
        let predicted = predicted.values();
        for l in 0..m {
            scores[[j, l]] = q2(predicted.column(l), observed.column(l))?;
        }
    }
    let mut p5 = Array1::zeros(m);
    let mut p50 = Array1::zeros(m);
    let mut p95 = Array1::zeros(m);
    for l in 0..m {
        let mut col: Vec<f64> = scores.slice(s![.., l]).to_vec();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        p5[l] = percentile_sorted(&col, 0.05);
        p50[l] = percentile_sorted(&col, 0.5);
        p95[l] = percentile_sorted(&col, 0.95);
    }
    Ok(Q2Report { scores, p5, p50, p95 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{fit_pca, TruncationCriterion};
    use crate::gp::{GpSurrogate, KernelParams};
    use crate::models_io::{eval_test_model, lhs_sample, InputSpace, TestModel};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn q2_limits() {
        let obs = array![1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(q2(obs.view(), obs.view()).unwrap(), 1.0, epsilon = 0.0);
        let mean_pred = array![2.5, 2.5, 2.5, 2.5];
        assert_abs_diff_eq!(q2(mean_pred.view(), obs.view()).unwrap(), 0.0, epsilon = 1e-15);
        let bad = array![4.0, 1.0, 4.0, 1.0];
        assert!(q2(bad.view(), obs.view()).unwrap() < 0.0);
    }

    #[test]
    fn q2_rejects_constant_observations() {
        let obs = array![2.0, 2.0, 2.0];
        let pred = array![1.0, 2.0, 3.0];
        assert!(matches!(
            q2(pred.view(), obs.view()),
            Err(Error::UndefinedQ2(_))
        ));
    }

    #[test]
    fn q2_invariances() {
        let obs = array![1.0, 2.0, 5.0, 3.0];
        let pred = array![1.2, 1.9, 4.7, 3.4];
        let base = q2(pred.view(), obs.view()).unwrap();
        let shifted = q2((&pred + 7.0).view(), (&obs + 7.0).view()).unwrap();
        assert_abs_diff_eq!(base, shifted, epsilon = 1e-12);
        let scaled = q2((&pred * 3.0).view(), (&obs * 3.0).view()).unwrap();
        assert_abs_diff_eq!(base, scaled, epsilon = 1e-12);
    }

    fn fitted_sine(
        n_train: usize,
        m: usize,
    ) -> (InputSpace, DesignMatrix, BasisExpansion, VectorGp) {
        let space = InputSpace::new(vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let design = lhs_sample(&space, n_train, 5).unwrap();
        let outputs =
            eval_test_model(&TestModel::AdditiveSine { output_dims: m }, &design).unwrap();
        let basis = fit_pca(&outputs, TruncationCriterion::FixedP(2)).unwrap();
        let params = KernelParams::new(vec![2.0, 2.0], 1.0, 1e-8).unwrap();
        let surrogates = basis
            .coefficients()
            .columns()
            .into_iter()
            .map(|c| GpSurrogate::with_params(&design, &c.to_owned(), params.clone()).unwrap())
            .collect();
        (space, design, basis, VectorGp::new(surrogates).unwrap())
    }

    #[test]
    fn interpolation_scores_near_one() {
        let (_, design, basis, vgp) = fitted_sine(40, 20);
        let observed = eval_test_model(
            &TestModel::AdditiveSine { output_dims: 20 },
            &design,
        )
        .unwrap();
        let report = q2_trajectory_report(&vgp, &basis, &design, &observed, 10, 7).unwrap();
        for v in report.scores.iter() {
            assert!(*v > 0.999, "Q² at training points was {v}");
        }
    }

    #[test]
    fn validation_report_is_accurate_and_ordered() {
        let (space, _, basis, vgp) = fitted_sine(200, 25);
        let validation = lhs_sample(&space, 50, 91).unwrap();
        let observed = eval_test_model(
            &TestModel::AdditiveSine { output_dims: 25 },
            &validation,
        )
        .unwrap();
        let report =
            q2_trajectory_report(&vgp, &basis, &validation, &observed, 100, 17).unwrap();
        assert_eq!(report.scores.dim(), (100, 25));
        for l in 0..25 {
            assert!(report.p5[l] <= report.p50[l] + 1e-12);
            assert!(report.p50[l] <= report.p95[l] + 1e-12);
            assert!(report.p50[l] >= 0.95, "median Q² {} at dim {l}", report.p50[l]);
        }
    }
}
