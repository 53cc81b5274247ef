//! Pick-freeze input designs and the closed (Janon-Monod) and total
//! (Jansen) estimators, scalar and vector-valued, plus bootstrap
//! resampling of the PF sample.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::models_io::InputSpace;
use crate::{seed, Error, Result};

/// Sorted set of frozen variable indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    indices: Vec<usize>,
}

impl IndexSet {
    pub fn new(mut indices: Vec<usize>, dims: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::InvalidDesign("index set must be non-empty".into()));
        }
        if indices.last().copied().unwrap_or(0) >= dims {
            return Err(Error::InvalidDesign(format!(
                "index set contains a variable >= d = {dims}"
            )));
        }
        Ok(Self { indices })
    }

    pub fn single(variable: usize, dims: usize) -> Result<Self> {
        Self::new(vec![variable], dims)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, variable: usize) -> bool {
        self.indices.binary_search(&variable).is_ok()
    }

    /// Complement within {0..d-1}; errors when `self` is the full set.
    pub fn complement(&self, dims: usize) -> Result<IndexSet> {
        let comp: Vec<usize> = (0..dims).filter(|i| !self.contains(*i)).collect();
        IndexSet::new(comp, dims)
    }
}

/// Paired pick-freeze designs for an index set u.
///
/// `x_hat` and `x_star` agree on the columns in u; `x_hat` and
/// `x_star_total` agree on the columns NOT in u, so the same object
/// serves the closed estimator and Jansen's total estimator.
#[derive(Debug, Clone)]
pub struct PfDesign {
    x_hat: Array2<f64>,
    x_star: Array2<f64>,
    x_star_total: Array2<f64>,
    index_set: IndexSet,
}

impl PfDesign {
    pub fn x_hat(&self) -> &Array2<f64> {
        &self.x_hat
    }

    pub fn x_star(&self) -> &Array2<f64> {
        &self.x_star
    }

    pub fn x_star_total(&self) -> &Array2<f64> {
        &self.x_star_total
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    pub fn n_pf(&self) -> usize {
        self.x_hat.nrows()
    }
}

/// Draw two independent samples and assemble the frozen designs.
pub fn make_pf_design(
    space: &InputSpace,
    n_pf: usize,
    u: &IndexSet,
    seed_value: u64,
) -> Result<PfDesign> {
    if n_pf < 2 {
        return Err(Error::InvalidDesign(format!(
            "PF sample needs n_pf >= 2, got {n_pf}"
        )));
    }
    let d = space.dims();
    let mut rng = seed::rng_from(seed_value);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut m = Array2::zeros((n_pf, d));
        for i in 0..n_pf {
            for j in 0..d {
                let (lo, hi) = space.bounds()[j];
                m[[i, j]] = lo + (hi - lo) * rng.gen::<f64>();
            }
        }
        m
    };
    let x1 = draw(&mut rng);
    let x2 = draw(&mut rng);

    let mut x_star = x2.clone();
    let mut x_star_total = x1.clone();
    for &j in u.indices() {
        x_star.column_mut(j).assign(&x1.column(j));
        x_star_total.column_mut(j).assign(&x2.column(j));
    }
    Ok(PfDesign {
        x_hat: x1,
        x_star,
        x_star_total,
        index_set: u.clone(),
    })
}

/// Vector-valued PF output pair (n_pf x p each).
#[derive(Debug, Clone)]
pub struct PfOutputs {
    pub y: Array2<f64>,
    pub y_star: Array2<f64>,
}

impl PfOutputs {
    pub fn new(y: Array2<f64>, y_star: Array2<f64>) -> Result<Self> {
        if y.dim() != y_star.dim() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                actual: y_star.len(),
                context: "PF output pair shapes",
            });
        }
        Ok(Self { y, y_star })
    }
}

/// Relative guard against division by a vanishing variance.
pub fn variance_floor(f0: f64) -> f64 {
    1e-12 * f64::max(1.0, f0 * f0)
}

/// Scalar Janon-Monod estimate.
#[derive(Debug, Clone, Copy)]
pub struct ScalarPf {
    pub s: f64,
    pub d_u: f64,
    pub d: f64,
    pub f0: f64,
}

pub fn scalar_closed_pf(y: ArrayView1<f64>, y_star: ArrayView1<f64>) -> Result<ScalarPf> {
    let n = y.len();
    if n < 2 || y_star.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n.max(2),
            actual: y_star.len(),
            context: "scalar PF sample lengths",
        });
    }
    let (f0, d_u, d) = scalar_moments(y, y_star);
    if d <= variance_floor(f0) {
        return Err(Error::DegenerateVariance(format!(
            "overall variance {d} below the floor"
        )));
    }
    Ok(ScalarPf {
        s: d_u / d,
        d_u,
        d,
        f0,
    })
}

/// Raw moments of the Janon-Monod estimator: (f0, D_u, D), no guard.
pub fn scalar_moments(y: ArrayView1<f64>, y_star: ArrayView1<f64>) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let mut sum = 0.0;
    let mut cross = 0.0;
    let mut squares = 0.0;
    for (&a, &b) in y.iter().zip(y_star.iter()) {
        sum += 0.5 * (a + b);
        cross += a * b;
        squares += 0.5 * (a * a + b * b);
    }
    let f0 = sum / n;
    (f0, cross / n - f0 * f0, squares / n - f0 * f0)
}

/// Scalar Jansen numerator: mean of (y - y*)^2 / 2.
pub fn scalar_total_jansen(y: ArrayView1<f64>, y_star_total: ArrayView1<f64>) -> f64 {
    let n = y.len() as f64;
    let mut acc = 0.0;
    for (&a, &b) in y.iter().zip(y_star_total.iter()) {
        let d = a - b;
        acc += d * d;
    }
    acc / (2.0 * n)
}

/// Matrix-valued PF estimate for vector outputs.
#[derive(Debug, Clone)]
pub struct SobolMatrixEstimate {
    /// Unnormalized closed index matrix (p x p, symmetrized).
    pub d_u: Array2<f64>,
    /// Jansen total matrix, when a total design was evaluated.
    pub d_total: Option<Array2<f64>>,
    /// Overall covariance matrix.
    pub cov: Array2<f64>,
    pub f0: Array1<f64>,
}

/// Definition-2 matrices from vector-valued PF outputs.
pub fn vector_closed_pf(outputs: &PfOutputs) -> Result<SobolMatrixEstimate> {
    let (n, p) = outputs.y.dim();
    if n < 2 || p < 1 {
        return Err(Error::InvalidDesign(format!(
            "vector PF needs n_pf >= 2 and p >= 1, got {n} x {p}"
        )));
    }
    let nf = n as f64;
    let f0 = (outputs.y.sum_axis(Axis(0)) + outputs.y_star.sum_axis(Axis(0))) / (2.0 * nf);
    let f0_outer = outer(&f0);

    let mut d_u = outputs.y.t().dot(&outputs.y_star) / nf - &f0_outer;
    // symmetrize: the population matrix is symmetric, the sample one is not
    d_u = 0.5 * (&d_u + &d_u.t());
    let cov = (outputs.y.t().dot(&outputs.y) + outputs.y_star.t().dot(&outputs.y_star)) / (2.0 * nf)
        - &f0_outer;

    if cov.diag().iter().all(|&v| v.abs() <= variance_floor(0.0)) {
        return Err(Error::DegenerateVariance(
            "overall covariance diagonal is all zero".into(),
        ));
    }
    Ok(SobolMatrixEstimate {
        d_u,
        d_total: None,
        cov,
        f0,
    })
}

/// Jansen total matrix: (1 / 2 n_pf) * sum_k (Y_k - Y_k^{-u})(Y_k - Y_k^{-u})^T.
pub fn vector_total_jansen(y: ArrayView2<f64>, y_star_total: ArrayView2<f64>) -> Array2<f64> {
    let (n, _p) = y.dim();
    let diff = &y - &y_star_total;
    diff.t().dot(&diff) / (2.0 * n as f64)
}

/// Plug-in total index: 1 - closed index of the complement.
pub fn plug_in_total(s_closed_complement: f64) -> f64 {
    1.0 - s_closed_complement
}

/// Bootstrap index rows for replicates b = 2..=N_X; replicate b = 1 is the
/// un-resampled estimate and is not included.
pub fn bootstrap_indices(n_pf: usize, n_x: usize, seed_value: u64) -> Array2<usize> {
    assert!(n_pf >= 1 && n_x >= 2, "bootstrap needs n_pf >= 1, N_X >= 2");
    let mut rng = seed::rng_from(seed_value);
    Array2::from_shape_fn((n_x - 1, n_pf), |_| rng.gen_range(0..n_pf))
}

fn outer(v: &Array1<f64>) -> Array2<f64> {
    let col = v.view().insert_axis(Axis(1));
    col.dot(&col.t())
}
