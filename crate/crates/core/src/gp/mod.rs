//! Conditional Gaussian processes on basis coefficients and joint
//! trajectory sampling at pick-freeze locations.
//!
//! One independent zero-prior-mean GP is fitted per basis coefficient
//! (the coefficients are empirically centered, so a constant prior adds
//! nothing). Trajectories are drawn from the conditional law via Cholesky
//! factorization of the conditional covariance, either factorized once and
//! reused (`Batch`) or refactorized per draw (`PerTrajectory`). Both modes
//! consume the same per-(coefficient, trajectory) derived seeds and the
//! same triangular multiply, so they produce bit-identical output.

mod fit;
mod kernel;

pub use fit::{fit_gp, log_marginal_likelihood, FitOptions};
pub use kernel::{cross_kernel, kernel_matrix, matern52, KernelParams};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use ndarray_linalg::cholesky::CholeskyInto;
use ndarray_linalg::triangular::SolveTriangular;
use ndarray_linalg::{Diag, UPLO};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::models_io::DesignMatrix;
use crate::{seed, Error, Result};

/// How conditional-covariance factorizations are scheduled when sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Factorize the conditional covariance once per coefficient and reuse
    /// it for every draw (faster, stores the factor).
    Batch,
    /// Rebuild and refactorize the covariance for every draw (slower,
    /// minimal memory).
    PerTrajectory,
}

/// A Gaussian process conditioned on scalar observations at a design.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    params: KernelParams,
    design: Array2<f64>,
    /// Lower Cholesky factor of K(D,D) + nugget·I (plus any escalated jitter).
    chol: Array2<f64>,
    /// Precomputed weights (K(D,D) + nugget·I)⁻¹ y.
    alpha: Array1<f64>,
    train_targets: Array1<f64>,
    log_likelihood: Option<f64>,
}

/// Factorize a symmetric matrix, escalating a diagonal jitter from
/// `scale * 1e-10` by doubling up to `scale * 1e-4` on failure.
///
/// `rebuild` must return a fresh copy of the matrix (a failed in-place
/// factorization destroys its input).
fn cholesky_with_escalation<F>(rebuild: F, scale: f64) -> Result<Array2<f64>>
where
    F: Fn() -> Array2<f64>,
{
    match rebuild().cholesky_into(UPLO::Lower) {
        Ok(l) => return Ok(l),
        Err(_) => {}
    }
    let mut jitter = 1e-10 * scale;
    let max_jitter = 1e-4 * scale;
    loop {
        let mut k = rebuild();
        for i in 0..k.nrows() {
            k[[i, i]] += jitter;
        }
        match k.cholesky_into(UPLO::Lower) {
            Ok(l) => return Ok(l),
            Err(_) if jitter < max_jitter => jitter = (jitter * 2.0).min(max_jitter),
            Err(_) => {
                return Err(Error::IllConditionedKernel(
                    "covariance factorization failed after maximum jitter escalation".into(),
                ))
            }
        }
    }
}

impl GpSurrogate {
    /// Condition a GP with the given hyperparameters on `targets` at `design`.
    pub fn with_params(
        design: &DesignMatrix,
        targets: &Array1<f64>,
        params: KernelParams,
    ) -> Result<Self> {
        let points = design.points();
        if params.dims() != design.space().dims() {
            return Err(Error::DimensionMismatch {
                expected: design.space().dims(),
                actual: params.dims(),
                context: "kernel lengthscales vs design dimension",
            });
        }
        if targets.len() != points.nrows() {
            return Err(Error::DimensionMismatch {
                expected: points.nrows(),
                actual: targets.len(),
                context: "targets vs design size",
            });
        }
        let chol = cholesky_with_escalation(
            || kernel_matrix(points.view(), &params, true),
            params.signal_variance,
        )?;
        // alpha = K⁻¹ y via the two triangular solves.
        let solve_err =
            |e: ndarray_linalg::error::LinalgError| Error::IllConditionedKernel(e.to_string());
        let z = chol
            .solve_triangular(UPLO::Lower, Diag::NonUnit, targets)
            .map_err(solve_err)?;
        let alpha = chol
            .t()
            .solve_triangular(UPLO::Upper, Diag::NonUnit, &z)
            .map_err(solve_err)?;
        Ok(Self {
            params,
            design: points.to_owned(),
            chol,
            alpha,
            train_targets: targets.clone(),
            log_likelihood: None,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn design_points(&self) -> ArrayView2<'_, f64> {
        self.design.view()
    }

    pub fn train_targets(&self) -> &Array1<f64> {
        &self.train_targets
    }

    /// Log marginal likelihood at the fitted hyperparameters, if fitted by
    /// [`fit_gp`].
    pub fn log_likelihood(&self) -> Option<f64> {
        self.log_likelihood
    }

    pub(crate) fn set_log_likelihood(&mut self, ll: f64) {
        self.log_likelihood = Some(ll);
    }

    /// Conditional (kriging) mean at the query points.
    pub fn conditional_mean(&self, query: ArrayView2<f64>) -> Array1<f64> {
        let kq = cross_kernel(query, self.design.view(), &self.params);
        kq.dot(&self.alpha)
    }

    /// Conditional mean and covariance at the query points.
    ///
    /// The covariance is K(q,q) − K(q,D)·K(D,D)⁻¹·K(D,q), symmetrized with
    /// its diagonal clamped at zero.
    pub fn conditional_moments(&self, query: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
        let cov = self.conditional_cov(query);
        (self.conditional_mean(query), cov)
    }

    fn conditional_cov(&self, query: ArrayView2<f64>) -> Array2<f64> {
        // W = L⁻¹ K(D,q); cov = K(q,q) − WᵀW.
        let kdq = cross_kernel(self.design.view(), query, &self.params);
        let w = self
            .chol
            .solve_triangular(UPLO::Lower, Diag::NonUnit, &kdq)
            .expect("triangular solve with a valid Cholesky factor");
        let mut cov = kernel_matrix(query, &self.params, false);
        general_mat_mul(-1.0, &w.t(), &w, 1.0, &mut cov);
        let n = cov.nrows();
        for i in 0..n {
            cov[[i, i]] = cov[[i, i]].max(0.0);
            for j in (i + 1)..n {
                let s = 0.5 * (cov[[i, j]] + cov[[j, i]]);
                cov[[i, j]] = s;
                cov[[j, i]] = s;
            }
        }
        cov
    }
}

/// Independent GP surrogates, one per basis coefficient, sharing a design.
#[derive(Debug, Clone)]
pub struct VectorGp {
    surrogates: Vec<GpSurrogate>,
}

impl VectorGp {
    pub fn new(surrogates: Vec<GpSurrogate>) -> Result<Self> {
        if surrogates.is_empty() {
            return Err(Error::InvalidDesign(
                "a vector GP needs at least one surrogate".into(),
            ));
        }
        let first = surrogates[0].design_points();
        for s in &surrogates[1..] {
            if s.design_points() != first {
                return Err(Error::InvalidDesign(
                    "all coefficient surrogates must share the same design".into(),
                ));
            }
        }
        Ok(Self { surrogates })
    }

    /// Fit one surrogate per column of `coefficients`.
    pub fn fit(
        design: &DesignMatrix,
        coefficients: ArrayView2<f64>,
        options: &FitOptions,
    ) -> Result<Self> {
        if coefficients.nrows() != design.len() {
            return Err(Error::DimensionMismatch {
                expected: design.len(),
                actual: coefficients.nrows(),
                context: "coefficient rows vs design size",
            });
        }
        let surrogates = coefficients
            .columns()
            .into_iter()
            .map(|col| fit_gp(design, &col.to_owned(), options))
            .collect::<Result<Vec<_>>>()?;
        Self::new(surrogates)
    }

    pub fn n_coefficients(&self) -> usize {
        self.surrogates.len()
    }

    pub fn surrogates(&self) -> &[GpSurrogate] {
        &self.surrogates
    }

    /// Conditional mean of every coefficient at the query points, L×p.
    pub fn conditional_means(&self, query: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((query.nrows(), self.surrogates.len()));
        for (q, s) in self.surrogates.iter().enumerate() {
            out.column_mut(q).assign(&s.conditional_mean(query));
        }
        out
    }
}

/// Joint trajectories of the coefficient GPs at a fixed query set.
#[derive(Debug, Clone)]
pub struct TrajectoryBatch {
    /// Draws, shape (n_traj, L, p): trajectory j, query point, coefficient.
    values: Array3<f64>,
    master_seed: u64,
}

impl TrajectoryBatch {
    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn n_trajectories(&self) -> usize {
        self.values.len_of(Axis(0))
    }

    pub fn n_points(&self) -> usize {
        self.values.len_of(Axis(1))
    }

    pub fn n_coefficients(&self) -> usize {
        self.values.len_of(Axis(2))
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }
}

/// Lower-triangular matrix-vector product reading only the lower triangle.
///
/// Both sampling modes route every draw through this one implementation so
/// the summation order (hence the floating-point result) is identical.
fn trmv_lower(l: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    debug_assert_eq!(l.nrows(), n);
    let mut y = vec![0.0; n];
    match l.as_slice() {
        Some(ls) => {
            for i in 0..n {
                let row = &ls[i * n..i * n + i + 1];
                let mut acc = 0.0;
                for (a, b) in row.iter().zip(&x[..=i]) {
                    acc += a * b;
                }
                y[i] = acc;
            }
        }
        None => {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..=i {
                    acc += l[[i, j]] * x[j];
                }
                y[i] = acc;
            }
        }
    }
    y
}

/// Standard-normal vector from the seed derived for coefficient `q`,
/// trajectory `j`; the one source of randomness for both sampling modes.
fn draw_eps(master_seed: u64, q: usize, j: usize, len: usize) -> Vec<f64> {
    let mut rng = seed::rng(master_seed, &[seed::stream::TRAJECTORY, q as u64, j as u64]);
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Draw `n_traj` joint trajectories of the vector GP at `query`.
///
/// Trajectory `j` of coefficient `q` always uses the seed derived from
/// `(master_seed, q, j)`, so serial/parallel execution and the two sampling
/// modes all agree bit-for-bit.
pub fn sample_trajectories(
    vgp: &VectorGp,
    query: ArrayView2<f64>,
    n_traj: usize,
    mode: SamplingMode,
    master_seed: u64,
) -> Result<TrajectoryBatch> {
    let n_points = query.nrows();
    let p = vgp.n_coefficients();
    let mut values = Array3::zeros((n_traj, n_points, p));
    // Coefficients share the training design, so surrogates with identical
    // hyperparameters have identical conditional covariances; in batch mode
    // the (expensive) factor is reused across such coefficients.
    let mut cached: Option<(KernelParams, Array2<f64>)> = None;
    for (q, surrogate) in vgp.surrogates().iter().enumerate() {
        let mean = surrogate.conditional_mean(query);
        let mean = mean.as_slice().expect("contiguous mean");
        let scale = surrogate.params().signal_variance;
        let rebuild = || surrogate.conditional_cov(query);
        match mode {
            SamplingMode::Batch => {
                if !cached
                    .as_ref()
                    .map_or(false, |(params, _)| params == surrogate.params())
                {
                    let l = cholesky_with_escalation(&rebuild, scale)?;
                    cached = Some((surrogate.params().clone(), l));
                }
                let l = &cached.as_ref().expect("factor just cached").1;
                for j in 0..n_traj {
                    let eps = draw_eps(master_seed, q, j, n_points);
                    let draw = trmv_lower(l, &eps);
                    let mut out = values.slice_mut(ndarray::s![j, .., q]);
                    for (o, (m, d)) in out.iter_mut().zip(mean.iter().zip(&draw)) {
                        *o = m + d;
                    }
                }
            }
            SamplingMode::PerTrajectory => {
                for j in 0..n_traj {
                    let l = cholesky_with_escalation(&rebuild, scale)?;
                    let eps = draw_eps(master_seed, q, j, n_points);
                    let draw = trmv_lower(&l, &eps);
                    let mut out = values.slice_mut(ndarray::s![j, .., q]);
                    for (o, (m, d)) in out.iter_mut().zip(mean.iter().zip(&draw)) {
                        *o = m + d;
                    }
                }
            }
        }
    }
    Ok(TrajectoryBatch {
        values,
        master_seed,
    })
}
