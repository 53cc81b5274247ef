//! Truncated linear basis expansion of functional outputs.
//!
//! Fitting is PCA (SVD of the centered output matrix, orthonormal
//! components), but every downstream formula goes through the general
//! Gram matrix `G = V V^T` so non-orthonormal bases plug in through
//! [`BasisExpansion::from_parts`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{JobSvd, SVDDC};

use crate::models_io::FunctionalOutputs;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationCriterion {
    /// Keep exactly p components.
    FixedP(usize),
    /// Keep the smallest p whose retained eigenvalue mass reaches tau.
    VarianceThreshold(f64),
}

impl Default for TruncationCriterion {
    fn default() -> Self {
        TruncationCriterion::VarianceThreshold(0.99)
    }
}

#[derive(Debug, Clone)]
pub struct BasisExpansion {
    mean: Array1<f64>,         // m
    components: Array2<f64>,   // p x m, rows are basis vectors
    coefficients: Array2<f64>, // n x p
    gram: Array2<f64>,         // p x p
    explained_ratio: f64,
}

impl BasisExpansion {
    /// Assemble an expansion from an arbitrary basis; the Gram matrix is
    /// computed from the components.
    pub fn from_parts(
        mean: Array1<f64>,
        components: Array2<f64>,
        coefficients: Array2<f64>,
    ) -> Result<Self> {
        if components.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: components.ncols(),
                context: "component width vs mean length",
            });
        }
        if coefficients.ncols() != components.nrows() {
            return Err(Error::DimensionMismatch {
                expected: components.nrows(),
                actual: coefficients.ncols(),
                context: "coefficient width vs component count",
            });
        }
        let gram = components.dot(&components.t());
        Ok(Self {
            mean,
            components,
            coefficients,
            gram,
            explained_ratio: 1.0,
        })
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    /// p x m component matrix V.
    pub fn components(&self) -> &Array2<f64> {
        &self.components
    }

    /// n x p training coefficient matrix.
    pub fn coefficients(&self) -> &Array2<f64> {
        &self.coefficients
    }

    /// Gram matrix G = V V^T.
    pub fn gram(&self) -> &Array2<f64> {
        &self.gram
    }

    pub fn explained_ratio(&self) -> f64 {
        self.explained_ratio
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn output_dims(&self) -> usize {
        self.components.ncols()
    }

    /// Project outputs onto the basis (orthonormal convention).
    pub fn project(&self, outputs: &Array2<f64>) -> Result<Array2<f64>> {
        if outputs.ncols() != self.output_dims() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dims(),
                actual: outputs.ncols(),
                context: "output width vs basis width",
            });
        }
        let centered = outputs - &self.mean;
        Ok(centered.dot(&self.components.t()))
    }

    /// mean + coefficients * V.
    pub fn reconstruct(&self, coefficients: &Array2<f64>) -> Result<FunctionalOutputs> {
        if coefficients.ncols() != self.n_components() {
            return Err(Error::DimensionMismatch {
                expected: self.n_components(),
                actual: coefficients.ncols(),
                context: "coefficient width vs component count",
            });
        }
        let values = coefficients.dot(&self.components) + &self.mean;
        FunctionalOutputs::new(values, None)
    }

    /// Empirical covariance of the training coefficients (DoE-fixed
    /// denominator for the fixed-covariance mode).
    pub fn coefficient_covariance(&self) -> Array2<f64> {
        let n = self.coefficients.nrows() as f64;
        let mean = self.coefficients.mean_axis(Axis(0)).expect("n >= 1");
        let centered = &self.coefficients - &mean;
        centered.t().dot(&centered) / n
    }

    /// Persist mean/components/coefficients as CSV files in a directory.
    pub fn save_dir<P: AsRef<Path>>(&self, dir: P) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        write_matrix(&dir.join("mean.csv"), &self.mean.view().insert_axis(Axis(0)))?;
        write_matrix(&dir.join("components.csv"), &self.components.view())?;
        write_matrix(&dir.join("coefficients.csv"), &self.coefficients.view())?;
        Ok(())
    }

    pub fn load_dir<P: AsRef<Path>>(dir: P) -> Result<Self> {
        let dir = dir.as_ref();
        let mean = read_matrix(&dir.join("mean.csv"))?;
        let components = read_matrix(&dir.join("components.csv"))?;
        let coefficients = read_matrix(&dir.join("coefficients.csv"))?;
        Self::from_parts(mean.row(0).to_owned(), components, coefficients)
    }
}

fn write_matrix(path: &Path, m: &ndarray::ArrayView2<f64>) -> Result<()> {
    let mut buf = String::new();
    for row in m.rows() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                buf.push(',');
            }
            let _ = write!(buf, "{v}");
        }
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?);
    }
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// PCA of the centered output matrix via SVD.
pub fn fit_pca(
    outputs: &FunctionalOutputs,
    criterion: TruncationCriterion,
) -> Result<BasisExpansion> {
    let values = outputs.values();
    let (n, m) = values.dim();
    if n < 2 {
        return Err(Error::InvalidDesign(format!(
            "PCA needs n >= 2 output rows, got {n}"
        )));
    }
    match criterion {
        TruncationCriterion::FixedP(p) if p == 0 || p > n.min(m) => {
            return Err(Error::InvalidDesign(format!(
                "fixed p = {p} outside 1..=min(n, m) = {}",
                n.min(m)
            )));
        }
        TruncationCriterion::VarianceThreshold(tau) if !(tau > 0.0 && tau <= 1.0) => {
            return Err(Error::InvalidDesign(format!(
                "variance threshold {tau} outside (0, 1]"
            )));
        }
        _ => {}
    }

    let mean = values.mean_axis(Axis(0)).expect("n >= 2");
    let centered = values - &mean;
    let total_variance: f64 = centered.iter().map(|v| v * v).sum();
    if total_variance <= f64::EPSILON * (n * m) as f64 {
        return Err(Error::DegenerateData(
            "outputs are constant, PCA is undefined".into(),
        ));
    }

    let (u, sigma, vt) = centered
        .svddc(JobSvd::Some)
        .map_err(|e| Error::DegenerateData(format!("SVD failed: {e}")))?;
    let u = u.expect("requested");
    let vt = vt.expect("requested");

    let eigenvalues: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    let total: f64 = eigenvalues.iter().sum();
    let p = match criterion {
        TruncationCriterion::FixedP(p) => p,
        TruncationCriterion::VarianceThreshold(tau) => {
            let mut acc = 0.0;
            let mut p = eigenvalues.len();
            for (i, ev) in eigenvalues.iter().enumerate() {
                acc += ev;
                if acc / total >= tau {
                    p = i + 1;
                    break;
                }
            }
            p
        }
    };

    let explained: f64 = eigenvalues.iter().take(p).sum::<f64>() / total;
    let components = vt.slice(ndarray::s![..p, ..]).to_owned();
    let mut coefficients = u.slice(ndarray::s![.., ..p]).to_owned();
    for (mut col, &s) in coefficients.columns_mut().into_iter().zip(sigma.iter()) {
        col.mapv_inplace(|v| v * s);
    }
    let gram = components.dot(&components.t());
    Ok(BasisExpansion {
        mean,
        components,
        coefficients,
        gram,
        explained_ratio: explained,
    })
}
