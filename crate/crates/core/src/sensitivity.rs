//! Reprojection of coefficient-level PF matrices to per-dimension
//! sensitivity maps, and generalized sensitivity indices through the
//! trace/Gram formulas.

use ndarray::{Array1, Array2};

use crate::pickfreeze::variance_floor;
use crate::{Error, Result};

/// Per-output-dimension sensitivity indices. Undefined entries (zero
/// local variance) are NaN, never clamped or zeroed.
#[derive(Debug, Clone)]
pub struct SensitivityMap {
    values: Array1<f64>,
    numerators: Array1<f64>,
    denominators: Array1<f64>,
}

impl SensitivityMap {
    /// Normalized indices; NaN marks an undefined pixel.
    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn numerators(&self) -> &Array1<f64> {
        &self.numerators
    }

    pub fn denominators(&self) -> &Array1<f64> {
        &self.denominators
    }

    /// Pixels whose normalized value falls outside [-slack, 1+slack].
    pub fn out_of_range(&self, slack: f64) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v.is_finite() && (v < -slack || v > 1.0 + slack))
            .map(|(l, _)| l)
            .collect()
    }
}

/// Quadratic forms v_l^T M v_l for every column v_l of V, computed as the
/// column sums of V .* (M V): O(p^2 m), never O(n_pf m).
pub fn quadratic_forms(matrix: &Array2<f64>, components: &Array2<f64>) -> Result<Array1<f64>> {
    let p = components.nrows();
    if matrix.dim() != (p, p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: matrix.nrows(),
            context: "matrix order vs component count",
        });
    }
    let mv = matrix.dot(components);
    let mut out = Array1::zeros(components.ncols());
    for (row_v, row_mv) in components.rows().into_iter().zip(mv.rows()) {
        for (l, (&v, &w)) in row_v.iter().zip(row_mv.iter()).enumerate() {
            out[l] += v * w;
        }
    }
    Ok(out)
}

/// Reproject a coefficient-level matrix pair (numerator M, overall
/// covariance D) through the components into a per-dimension map.
pub fn reproject_map(
    numerator_matrix: &Array2<f64>,
    cov_matrix: &Array2<f64>,
    components: &Array2<f64>,
) -> Result<SensitivityMap> {
    let numerators = quadratic_forms(numerator_matrix, components)?;
    let denominators = quadratic_forms(cov_matrix, components)?;
    let values = numerators
        .iter()
        .zip(denominators.iter())
        .map(|(&num, &den)| {
            if den > variance_floor(0.0) {
                num / den
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(SensitivityMap {
        values,
        numerators,
        denominators,
    })
}

/// Tr(A B) for symmetric B via the elementwise product, 2 p^2 operations.
pub fn trace_product(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let mut acc = 0.0;
    for (row_a, col_b) in a.rows().into_iter().zip(b.columns()) {
        for (&x, &y) in row_a.iter().zip(col_b.iter()) {
            acc += x * y;
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsiKind {
    Closed,
    Total,
    PlugInTotal,
}

#[derive(Debug, Clone, Copy)]
pub struct GsiValue {
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub kind: GsiKind,
}

/// Trace-ratio GSI: Tr(M G) / Tr(D G) with M the closed or Jansen matrix.
pub fn gsi(
    numerator_matrix: &Array2<f64>,
    cov_matrix: &Array2<f64>,
    gram: &Array2<f64>,
    kind: GsiKind,
) -> Result<GsiValue> {
    let p = gram.nrows();
    if numerator_matrix.dim() != (p, p) || cov_matrix.dim() != (p, p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: numerator_matrix.nrows(),
            context: "estimate matrices vs Gram order",
        });
    }
    let numerator = trace_product(numerator_matrix, gram);
    let denominator = trace_product(cov_matrix, gram);
    if denominator <= variance_floor(0.0) {
        return Err(Error::DegenerateVariance(format!(
            "GSI denominator trace {denominator} below the floor"
        )));
    }
    Ok(GsiValue {
        value: numerator / denominator,
        numerator,
        denominator,
        kind,
    })
}

/// GSI with the denominator held at a DoE-fixed covariance matrix.
pub fn gsi_fixed_covariance(
    numerator_matrix: &Array2<f64>,
    gram: &Array2<f64>,
    fixed_cov: &Array2<f64>,
    kind: GsiKind,
) -> Result<GsiValue> {
    gsi(numerator_matrix, fixed_cov, gram, kind)
}
