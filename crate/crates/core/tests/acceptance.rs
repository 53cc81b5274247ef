//! End-to-end behavioral checks of the full estimation stack.
//!
//! All checks run sequentially inside one test function so the wall-clock
//! budgets are honest on a single-core runner; each prints its own PASS or
//! FAIL line together with the elapsed time.

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, Array3, ArrayView3};
use ndarray_linalg::{Eigh, UPLO};
use rand::Rng;

use sensmap::basis::{fit_pca, BasisExpansion, TruncationCriterion};
use sensmap::errquant::{
    estimate_basis_derived, predicted_costs, run_dimension_wise_reference, run_bootstrap_on_trajectories,
    sample_pf_coefficients, summarize_gsi, CovarianceMode, PfCoefficientSamples, RunConfig, Scope,
};
use sensmap::errquant::estimate_dimension_wise;
use sensmap::gp::{
    sample_trajectories, FitOptions, GpSurrogate, KernelParams, SamplingMode, VectorGp,
};
use sensmap::models_io::{
    additive_sine_first_order, eval_test_model, lhs_sample, DesignMatrix, FunctionalOutputs,
    InputSpace, TestModel,
};
use sensmap::pickfreeze::{
    make_pf_design, vector_closed_pf, vector_total_jansen, IndexSet, PfOutputs,
};
use sensmap::sensitivity::{gsi, GsiKind};

type CheckResult = Result<(), String>;

fn fail(msg: String) -> CheckResult {
    Err(msg)
}

/// |a - b| <= tol * max(|b|, 1), with NaN matching NaN (missing cells).
fn close(a: f64, b: f64, tol: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= tol * b.abs().max(1.0)
}

fn compare_cube(label: &str, a: ArrayView3<f64>, b: ArrayView3<f64>, tol: f64) -> CheckResult {
    if a.dim() != b.dim() {
        return fail(format!("{label}: shapes {:?} vs {:?}", a.dim(), b.dim()));
    }
    for (idx, (&x, &y)) in a.indexed_iter().zip(b.iter()).map(|((i, x), y)| (i, (x, y))) {
        if !close(x, y, tol) {
            return fail(format!("{label}[{idx:?}]: {x} vs {y}"));
        }
    }
    Ok(())
}

fn fixed_vector_gp(
    design: &DesignMatrix,
    coefficients: &Array2<f64>,
    lengthscale: f64,
) -> VectorGp {
    let d = design.space().dims();
    let params = KernelParams::new(vec![lengthscale; d], 1.0, 1e-8).unwrap();
    let surrogates = coefficients
        .columns()
        .into_iter()
        .map(|col| GpSurrogate::with_params(design, &col.to_owned(), params.clone()).unwrap())
        .collect();
    VectorGp::new(surrogates).unwrap()
}

/// Smooth three-variable functional test instance of rank five in the
/// output grid, so a four-component basis is well defined.
fn smooth_d3_outputs(design: &DesignMatrix, m: usize) -> FunctionalOutputs {
    let grid = TestModel::sine_grid(m);
    let points = design.points();
    let values = Array2::from_shape_fn((design.len(), m), |(i, l)| {
        let (x1, x2, x3) = (points[[i, 0]], points[[i, 1]], points[[i, 2]]);
        let t = grid[l];
        (x1 + t).sin() + x2 * (2.0 * t).cos() + (1.7 * x3 + 0.3).sin() * t.sin()
            + 0.5 * x1 * x3 * (3.0 * t).cos()
    });
    FunctionalOutputs::new(values, Some(grid)).unwrap()
}

/// Additive-sine pipeline with fixed GP hyperparameters (the model is
/// linear in each input, so broad lengthscales fit well).
fn sine_pipeline(n_doe: usize, m: usize, seed: u64) -> (InputSpace, BasisExpansion, VectorGp) {
    let space = InputSpace::unit(2).unwrap();
    let design = lhs_sample(&space, n_doe, seed).unwrap();
    let outputs = eval_test_model(&TestModel::AdditiveSine { output_dims: m }, &design).unwrap();
    let basis = fit_pca(&outputs, TruncationCriterion::FixedP(2)).unwrap();
    let vgp = fixed_vector_gp(&design, basis.coefficients(), 2.0);
    (space, basis, vgp)
}

fn run_config(n_pf: usize, n_traj: usize, n_boot: usize, include_total: bool) -> RunConfig {
    RunConfig {
        n_pf,
        n_traj,
        n_boot,
        sampling: SamplingMode::Batch,
        covariance: CovarianceMode::Empirical,
        seed: 0xACCE_57,
        include_total,
    }
}

// ---------------------------------------------------------------------------
// 1. The fast basis-derived loop and the dimension-wise loop are the same
//    estimator: maps and GSI agree to 1e-10 relative on a random instance.
// ---------------------------------------------------------------------------
fn check_estimator_equivalence() -> CheckResult {
    let space = InputSpace::unit(3).unwrap();
    let design = lhs_sample(&space, 40, 11).unwrap();
    let outputs = smooth_d3_outputs(&design, 50);
    let basis = fit_pca(&outputs, TruncationCriterion::FixedP(4)).unwrap();
    let vgp = fixed_vector_gp(&design, basis.coefficients(), 1.5);
    let u = IndexSet::new(vec![0, 2], 3).unwrap();
    let cfg = run_config(500, 3, 4, true);

    let fast = run_bootstrap_on_trajectories(&vgp, &basis, &space, &u, &cfg).map_err(|e| e.to_string())?;
    let reference =
        run_dimension_wise_reference(&vgp, &basis, &space, &u, &cfg).map_err(|e| e.to_string())?;

    compare_cube("closed maps", fast.maps().view(), reference.maps().view(), 1e-10)?;
    compare_cube(
        "total maps",
        fast.maps_total().unwrap().view(),
        reference.maps_total().unwrap().view(),
        1e-10,
    )?;
    for (which, a, b) in [
        ("closed GSI", fast.gsi(), reference.gsi()),
        ("total GSI", fast.gsi_total().unwrap(), reference.gsi_total().unwrap()),
    ] {
        for ((j, k), (&x, &y)) in a.indexed_iter().zip(b.iter()).map(|((i, x), y)| (i, (x, y))) {
            if !close(x, y, 1e-10) {
                return fail(format!("{which}[{j},{k}]: {x} vs {y}"));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 2. Exact-model pick-freeze on the additive-sine benchmark recovers the
//    analytic first-order map cos^2(t) and a GSI of one half.
// ---------------------------------------------------------------------------
fn check_analytic_recovery() -> CheckResult {
    let m = 100;
    let n_pf = 100_000;
    let space = InputSpace::unit(2).unwrap();
    let u = IndexSet::single(0, 2).unwrap();
    let pf = make_pf_design(&space, n_pf, &u, 20_260_826).map_err(|e| e.to_string())?;
    let model = TestModel::AdditiveSine { output_dims: m };
    let eval = |points: &Array2<f64>| -> Result<Array2<f64>, String> {
        let design =
            DesignMatrix::new(points.clone(), space.clone()).map_err(|e| e.to_string())?;
        Ok(eval_test_model(&model, &design)
            .map_err(|e| e.to_string())?
            .values()
            .clone())
    };
    let outputs =
        PfOutputs::new(eval(pf.x_hat())?, eval(pf.x_star())?).map_err(|e| e.to_string())?;
    let est = vector_closed_pf(&outputs).map_err(|e| e.to_string())?;

    let truth = additive_sine_first_order(0, &TestModel::sine_grid(m));
    let mut worst = 0.0f64;
    for l in 0..m {
        let s_hat = est.d_u[[l, l]] / est.cov[[l, l]];
        worst = worst.max((s_hat - truth[l]).abs());
    }
    if worst > 0.02 {
        return fail(format!("max map deviation {worst} > 0.02"));
    }
    let identity = Array2::eye(m);
    let g = gsi(&est.d_u, &est.cov, &identity, GsiKind::Closed).map_err(|e| e.to_string())?;
    if (g.value - 0.5).abs() > 0.02 {
        return fail(format!("GSI {} not within 0.02 of 0.5", g.value));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 3. The total-effect matrix estimator is positive semi-definite up to
//    roundoff and exactly zero when the frozen variables are ignored.
// ---------------------------------------------------------------------------
fn check_total_matrix_properties() -> CheckResult {
    let mut rng = sensmap::seed::rng_from(33);
    for case in 0..100 {
        let n = rng.gen_range(10..60);
        let p = rng.gen_range(1..=8);
        let y = Array2::from_shape_fn((n, p), |_| rng.gen::<f64>() * 4.0 - 2.0);
        let y_star = Array2::from_shape_fn((n, p), |_| rng.gen::<f64>() * 4.0 - 2.0);
        let t = vector_total_jansen(y.view(), y_star.view());
        let (eigs, _) = t.eigh(UPLO::Lower).map_err(|e| e.to_string())?;
        let trace = t.diag().sum();
        let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < -1e-12 * trace {
            return fail(format!(
                "case {case}: min eigenvalue {min_eig} below -1e-12 * trace ({trace})"
            ));
        }
        // A model that ignores the frozen variables yields identical output
        // pairs, so the matrix must vanish exactly.
        let zero = vector_total_jansen(y.view(), y.view());
        if zero.iter().any(|&v| v != 0.0) {
            return fail(format!("case {case}: nonzero total matrix for an ignored set"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 4. GP contract: interpolation at training points, trajectory moments
//    matching the conditional moments, and bit-identical sampling modes.
// ---------------------------------------------------------------------------
fn check_gp_contract() -> CheckResult {
    let space = InputSpace::unit(2).unwrap();
    let design = lhs_sample(&space, 25, 5).unwrap();
    let targets = Array1::from_iter(
        design
            .points()
            .rows()
            .into_iter()
            .map(|r| (2.0 * r[0]).sin() + r[1] * r[1]),
    );
    let params = KernelParams::new(vec![0.8, 0.8], 1.0, 1e-10).unwrap();
    let surrogate =
        GpSurrogate::with_params(&design, &targets, params).map_err(|e| e.to_string())?;

    let mean = surrogate.conditional_mean(design.points().view());
    let worst = mean
        .iter()
        .zip(targets.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if worst > 1e-6 {
        return fail(format!("training-point mean error {worst} > 1e-6"));
    }

    // Sample moments at one query point over 10^4 draws.
    let query = Array2::from_shape_vec((1, 2), vec![0.37, 0.81]).unwrap();
    let (cond_mean, cond_cov) = surrogate.conditional_moments(query.view());
    let vgp = VectorGp::new(vec![surrogate]).unwrap();
    let n_draws = 10_000usize;
    let batch = sample_trajectories(&vgp, query.view(), n_draws, SamplingMode::Batch, 404)
        .map_err(|e| e.to_string())?;
    let draws: Vec<f64> = batch.values().iter().cloned().collect();
    let nf = n_draws as f64;
    let sample_mean = draws.iter().sum::<f64>() / nf;
    let sample_var =
        draws.iter().map(|v| (v - sample_mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let se_mean = (cond_cov[[0, 0]] / nf).sqrt();
    if (sample_mean - cond_mean[0]).abs() > 4.0 * se_mean {
        return fail(format!(
            "trajectory mean {sample_mean} vs conditional {} beyond 4 SE ({se_mean})",
            cond_mean[0]
        ));
    }
    let se_var = cond_cov[[0, 0]] * (2.0 / (nf - 1.0)).sqrt();
    if (sample_var - cond_cov[[0, 0]]).abs() > 4.0 * se_var {
        return fail(format!(
            "trajectory variance {sample_var} vs conditional {} beyond 4 SE ({se_var})",
            cond_cov[[0, 0]]
        ));
    }

    // Both sampling modes must agree bit for bit under the same seed.
    let query5 = Array2::from_shape_fn((5, 2), |(i, j)| 0.1 + 0.17 * (i as f64) + 0.05 * j as f64);
    let a = sample_trajectories(&vgp, query5.view(), 7, SamplingMode::Batch, 777)
        .map_err(|e| e.to_string())?;
    let b = sample_trajectories(&vgp, query5.view(), 7, SamplingMode::PerTrajectory, 777)
        .map_err(|e| e.to_string())?;
    if a.values() != b.values() {
        return fail("batch and per-trajectory draws are not bit-identical".into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 5. Error separation: metamodel spread shrinks with the training design
//    while estimation spread shrinks with the pick-freeze sample size.
// ---------------------------------------------------------------------------
fn check_error_separation() -> CheckResult {
    let m = 32;

    // (a) metamodel-only GSI IQR: DoE of 200 beats DoE of 20 for each input.
    let small = sine_pipeline(20, m, 51);
    let large = sine_pipeline(200, m, 52);
    let cfg_a = run_config(1000, 100, 10, false);
    for variable in 0..2 {
        let u = IndexSet::single(variable, 2).unwrap();
        let mut iqrs = Vec::new();
        for (space, basis, vgp) in [&small, &large] {
            let dist = run_bootstrap_on_trajectories(vgp, basis, space, &u, &cfg_a).map_err(|e| e.to_string())?;
            iqrs.push(
                summarize_gsi(&dist, Scope::MetamodelOnly)
                    .map_err(|e| e.to_string())?
                    .iqr(),
            );
        }
        if !(iqrs[1] < iqrs[0]) {
            return fail(format!(
                "variable {variable}: metamodel IQR {} (n=200) not below {} (n=20)",
                iqrs[1], iqrs[0]
            ));
        }
    }

    // (b) with the large design fixed, the overall GSI IQR decreases in the
    // pick-freeze size while the metamodel-only IQR stays put (< 25%).
    let (space, basis, vgp) = &large;
    let u = IndexSet::single(0, 2).unwrap();
    let mut overall = Vec::new();
    let mut metamodel = Vec::new();
    for n_pf in [1000usize, 5000, 11000] {
        let cfg = run_config(n_pf, 50, 50, false);
        let dist = run_bootstrap_on_trajectories(vgp, basis, space, &u, &cfg).map_err(|e| e.to_string())?;
        overall.push(summarize_gsi(&dist, Scope::Overall).map_err(|e| e.to_string())?.iqr());
        metamodel.push(
            summarize_gsi(&dist, Scope::MetamodelOnly)
                .map_err(|e| e.to_string())?
                .iqr(),
        );
    }
    if !(overall[0] > overall[1] && overall[1] > overall[2]) {
        return fail(format!("overall IQRs not strictly decreasing: {overall:?}"));
    }
    let lo = metamodel.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = metamodel.iter().cloned().fold(0.0f64, f64::max);
    if (hi - lo) / hi >= 0.25 {
        return fail(format!("metamodel IQRs vary by >= 25%: {metamodel:?}"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 6. On pre-sampled trajectories, the basis-derived core is at least ten
//    times faster than the dimension-wise core at m=4096, p=10.
// ---------------------------------------------------------------------------
fn check_speedup() -> CheckResult {
    let (m, p, n_pf, n_traj, n_boot) = (4096usize, 10usize, 1000usize, 10usize, 10usize);
    let mut rng = sensmap::seed::rng_from(606);
    // An orthonormal basis of the right width from a random functional table.
    let table = Array2::from_shape_fn((20, m), |_| rng.gen::<f64>() * 2.0 - 1.0);
    let basis = fit_pca(
        &FunctionalOutputs::new(table, None).unwrap(),
        TruncationCriterion::FixedP(p),
    )
    .map_err(|e| e.to_string())?;
    let mut draw = || Array3::from_shape_fn((n_traj, n_pf, p), |_| rng.gen::<f64>() * 2.0 - 1.0);
    let samples = PfCoefficientSamples {
        y: draw(),
        y_star: draw(),
        y_star_total: Some(draw()),
    };
    let cfg = run_config(n_pf, n_traj, n_boot, true);

    let t0 = Instant::now();
    let slow =
        estimate_dimension_wise(&samples, basis.components(), &cfg, None).map_err(|e| e.to_string())?;
    let dw = t0.elapsed();
    let t1 = Instant::now();
    let fast = estimate_basis_derived(&samples, basis.components(), basis.gram(), &cfg, None)
        .map_err(|e| e.to_string())?;
    let bd = t1.elapsed();

    // Sanity: both cores really computed the same maps.
    compare_cube("speedup maps", fast.maps().view(), slow.maps().view(), 1e-10)?;
    let ratio = dw.as_secs_f64() / bd.as_secs_f64();
    if ratio < 10.0 {
        return fail(format!(
            "wall-clock ratio {ratio:.1} < 10 (dimension-wise {dw:?}, basis-derived {bd:?})"
        ));
    }
    println!("    speedup {ratio:.1}x (dimension-wise {dw:?}, basis-derived {bd:?})");
    Ok(())
}

// ---------------------------------------------------------------------------
// 7. Flop model: exact counts at (p=10, n_pf=5000, m=4096) and the
//    harmonic-mean lower bound on 100 random parameter triples.
// ---------------------------------------------------------------------------
fn check_cost_model() -> CheckResult {
    let c = predicted_costs(10, 5000, 4096);
    if c.cost_dw != 983_040_000 || c.cost_bd != 4_451_680 {
        return fail(format!("costs ({}, {}) differ from the model", c.cost_dw, c.cost_bd));
    }
    let mut rng = sensmap::seed::rng_from(707);
    for _ in 0..100 {
        let n_pf = rng.gen_range(10..100_000usize);
        let m = rng.gen_range(2..50_000usize);
        let p = rng.gen_range(1..=n_pf.min(m).min(200));
        let c = predicted_costs(p, n_pf, m);
        let ratio = c.cost_dw as f64 / c.cost_bd as f64;
        if ratio < c.lower_bound_ratio * (1.0 - 1e-12) {
            return fail(format!(
                "p={p} n_pf={n_pf} m={m}: ratio {ratio} below bound {}",
                c.lower_bound_ratio
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 8. Holding the GSI denominator at the training-data covariance moves the
//    median by less than 0.02 on the additive-sine benchmark.
// ---------------------------------------------------------------------------
fn check_fixed_covariance_agreement() -> CheckResult {
    let (space, basis, vgp) = sine_pipeline(80, 32, 88);
    let u = IndexSet::single(0, 2).unwrap();
    let cfg = run_config(5000, 50, 20, false);
    let samples =
        sample_pf_coefficients(&vgp, &space, &u, &cfg).map_err(|e| e.to_string())?;
    let empirical = estimate_basis_derived(&samples, basis.components(), basis.gram(), &cfg, None)
        .map_err(|e| e.to_string())?;
    let doe_cov = basis.coefficient_covariance();
    let fixed =
        estimate_basis_derived(&samples, basis.components(), basis.gram(), &cfg, Some(&doe_cov))
            .map_err(|e| e.to_string())?;
    let med_emp = summarize_gsi(&empirical, Scope::Overall).map_err(|e| e.to_string())?.median;
    let med_fix = summarize_gsi(&fixed, Scope::Overall).map_err(|e| e.to_string())?.median;
    if (med_emp - med_fix).abs() >= 0.02 {
        return fail(format!(
            "GSI medians {med_emp} (empirical) vs {med_fix} (fixed) differ by >= 0.02"
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 9. Full-scale smoke: an eight-variable functional model at m=4096 with
//    200 trajectories and 50 replicates completes within one hour.
// ---------------------------------------------------------------------------
fn check_full_scale_smoke() -> CheckResult {
    let started = Instant::now();
    let (d, p, m) = (8usize, 10usize, 4096usize);
    let space = InputSpace::unit(d).unwrap();
    let design = lhs_sample(&space, 60, 90).unwrap();
    let grid = TestModel::sine_grid(m);
    let points = design.points();
    // Distinct grid frequencies per input keep the output rank above p.
    let values = Array2::from_shape_fn((design.len(), m), |(i, l)| {
        (0..d)
            .map(|v| ((v + 1) as f64 * grid[l] + points[[i, v]]).sin() / ((v + 1) as f64).sqrt())
            .sum()
    });
    let outputs = FunctionalOutputs::new(values, Some(grid)).unwrap();
    let basis = fit_pca(&outputs, TruncationCriterion::FixedP(p)).unwrap();
    let options = FitOptions {
        n_starts: 4,
        max_evals: 150,
        ..FitOptions::default()
    };
    let vgp = VectorGp::fit(&design, basis.coefficients().view(), &options)
        .map_err(|e| e.to_string())?;

    let u = IndexSet::single(0, d).unwrap();
    let cfg = run_config(5000, 200, 50, false);
    let dist = run_bootstrap_on_trajectories(&vgp, &basis, &space, &u, &cfg).map_err(|e| e.to_string())?;
    if dist.output_dims() != m || dist.n_trajectories() != 200 || dist.n_replicates() != 50 {
        return fail("unexpected distribution shape".into());
    }
    let summary = summarize_gsi(&dist, Scope::Overall).map_err(|e| e.to_string())?;
    if !summary.median.is_finite() {
        return fail(format!("non-finite GSI median {}", summary.median));
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(3600) {
        return fail(format!("took {elapsed:?} (> 1 hour)"));
    }
    println!("    full-scale run finished in {elapsed:?}, median GSI {:.3}", summary.median);
    Ok(())
}

#[test]
fn acceptance() {
    let checks: Vec<(&str, Duration, fn() -> CheckResult)> = vec![
        ("estimator equivalence (fast vs dimension-wise)", Duration::from_secs(10),
            check_estimator_equivalence),
        ("analytic recovery on the additive-sine model", Duration::from_secs(30),
            check_analytic_recovery),
        ("total-effect matrix PSD and exact-zero properties", Duration::from_secs(3600),
            check_total_matrix_properties),
        ("GP interpolation, moments, and sampling-mode identity", Duration::from_secs(3600),
            check_gp_contract),
        ("metamodel vs estimation error separation", Duration::from_secs(300),
            check_error_separation),
        ("basis-derived speedup over dimension-wise (>= 10x)", Duration::from_secs(3600),
            check_speedup),
        ("operation-count model and lower bound", Duration::from_secs(3600),
            check_cost_model),
        ("fixed vs empirical GSI denominator agreement", Duration::from_secs(3600),
            check_fixed_covariance_agreement),
        ("full-scale smoke run", Duration::from_secs(3600),
            check_full_scale_smoke),
    ];

    let mut failures = Vec::new();
    for (i, (name, budget, check)) in checks.iter().enumerate() {
        let t0 = Instant::now();
        let mut outcome = check();
        let elapsed = t0.elapsed();
        if outcome.is_ok() && elapsed > *budget {
            outcome = Err(format!("passed but took {elapsed:?} (budget {budget:?})"));
        }
        match &outcome {
            Ok(()) => println!("PASS [{:>2}] {name} ({elapsed:.2?})", i + 1),
            Err(msg) => println!("FAIL [{:>2}] {name} ({elapsed:.2?}): {msg}", i + 1),
        }
        if let Err(msg) = outcome {
            failures.push(format!("[{}] {name}: {msg}", i + 1));
        }
    }
    assert!(failures.is_empty(), "failed checks:\n{}", failures.join("\n"));
}
