//! Anisotropic Matérn 5/2 covariance kernel.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::{Error, Result};

/// Hyperparameters of an anisotropic Matérn 5/2 kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    /// One positive lengthscale per input dimension.
    pub lengthscales: Vec<f64>,
    /// Signal variance `sigma^2` (kernel value at zero distance).
    pub signal_variance: f64,
    /// Additive diagonal noise variance.
    pub nugget: f64,
}

impl KernelParams {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, nugget: f64) -> Result<Self> {
        if lengthscales.is_empty() || lengthscales.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidDesign(
                "lengthscales must be positive and finite".into(),
            ));
        }
        if !(signal_variance > 0.0) || !signal_variance.is_finite() {
            return Err(Error::InvalidDesign(
                "signal variance must be positive and finite".into(),
            ));
        }
        if !(nugget >= 0.0) || !nugget.is_finite() {
            return Err(Error::InvalidDesign("nugget must be non-negative".into()));
        }
        Ok(Self {
            lengthscales,
            signal_variance,
            nugget,
        })
    }

    pub fn dims(&self) -> usize {
        self.lengthscales.len()
    }
}

/// Matérn 5/2 correlation as a function of the scaled distance `r`.
#[inline]
pub(crate) fn matern52_correlation(r: f64) -> f64 {
    let s = 5.0_f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[inline]
fn scaled_distance(x: ArrayView1<f64>, y: ArrayView1<f64>, lengthscales: &[f64]) -> f64 {
    let mut sq = 0.0;
    for ((&a, &b), &t) in x.iter().zip(y.iter()).zip(lengthscales.iter()) {
        let z = (a - b) / t;
        sq += z * z;
    }
    sq.sqrt()
}

/// Kernel value between two points (noise-free: the nugget is not added).
pub fn matern52(x: ArrayView1<f64>, y: ArrayView1<f64>, params: &KernelParams) -> f64 {
    debug_assert_eq!(x.len(), params.dims());
    debug_assert_eq!(y.len(), params.dims());
    params.signal_variance * matern52_correlation(scaled_distance(x, y, &params.lengthscales))
}

/// Cross-covariance matrix between two point sets, shape `(a.nrows(), b.nrows())`.
pub fn cross_kernel(a: ArrayView2<f64>, b: ArrayView2<f64>, params: &KernelParams) -> Array2<f64> {
    let mut k = Array2::zeros((a.nrows(), b.nrows()));
    for (i, xi) in a.rows().into_iter().enumerate() {
        for (j, yj) in b.rows().into_iter().enumerate() {
            k[[i, j]] = matern52(xi, yj, params);
        }
    }
    k
}

/// Symmetric kernel matrix of one point set; optionally adds the nugget on
/// the diagonal. Only the upper triangle is computed, then mirrored.
pub fn kernel_matrix(a: ArrayView2<f64>, params: &KernelParams, add_nugget: bool) -> Array2<f64> {
    let n = a.nrows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        let xi = a.row(i);
        k[[i, i]] = params.signal_variance + if add_nugget { params.nugget } else { 0.0 };
        for j in (i + 1)..n {
            let v = matern52(xi, a.row(j), params);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Correlation matrix (unit signal variance) with `eta` added on the
/// diagonal; used by the profiled likelihood during fitting.
pub(crate) fn correlation_matrix(a: ArrayView2<f64>, lengthscales: &[f64], eta: f64) -> Array2<f64> {
    let n = a.nrows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = 1.0 + eta;
        for j in (i + 1)..n {
            let r = scaled_distance(a.row(i), a.row(j), lengthscales);
            let v = matern52_correlation(r);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}
