//! Maximum-likelihood hyperparameter estimation.
//!
//! The signal variance is profiled out analytically, leaving a search over
//! log-lengthscales and the log noise-to-signal ratio. The search is a
//! deterministic multi-start: a Latin grid of start points in log space,
//! each refined by Nelder-Mead (derivative-free; no analytic gradients are
//! implemented).

use ndarray::{Array1, ArrayView1, ArrayView2};
use ndarray_linalg::cholesky::CholeskyInto;
use ndarray_linalg::triangular::SolveTriangular;
use ndarray_linalg::{Diag, UPLO};

use super::kernel::{correlation_matrix, kernel_matrix, KernelParams};
use super::GpSurrogate;
use crate::models_io::DesignMatrix;
use crate::{Error, Result};

/// Floor on the profiled signal variance (reached only for degenerate
/// targets such as the all-zero vector).
const SIGMA2_FLOOR: f64 = 1e-12;

/// Options for [`fit_gp`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Number of Latin-grid start points for the local searches.
    pub n_starts: usize,
    /// Objective-evaluation budget per local search.
    pub max_evals: usize,
    /// Lengthscale bounds as multiples of each input range.
    pub lengthscale_factors: (f64, f64),
    /// Bounds on the noise-to-signal ratio nugget/sigma^2.
    pub nugget_ratio_bounds: (f64, f64),
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_evals: 400,
            lengthscale_factors: (1e-3, 1e3),
            nugget_ratio_bounds: (1e-10, 1e-2),
        }
    }
}

/// Full log marginal likelihood −½yᵀK⁻¹y − ½ log det K − (n/2) log 2π with
/// K = kernel matrix + nugget·I. Returns −∞ if K cannot be factorized.
pub fn log_marginal_likelihood(
    points: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    params: &KernelParams,
) -> f64 {
    let n = points.nrows();
    let k = kernel_matrix(points, params, true);
    let l = match k.cholesky_into(UPLO::Lower) {
        Ok(l) => l,
        Err(_) => return f64::NEG_INFINITY,
    };
    let y = targets.to_owned();
    let z = l
        .solve_triangular(UPLO::Lower, Diag::NonUnit, &y)
        .expect("solve with fresh Cholesky factor");
    let quad: f64 = z.iter().map(|v| v * v).sum();
    let log_det: f64 = (0..n).map(|i| l[[i, i]].ln()).sum::<f64>() * 2.0;
    -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// Negative profiled log-likelihood at log-parameters
/// `z = [ln θ_1, …, ln θ_d, ln η]`, along with the profiled σ².
fn profiled_nll(points: ArrayView2<f64>, targets: &Array1<f64>, z: &[f64]) -> (f64, f64) {
    let d = z.len() - 1;
    let thetas: Vec<f64> = z[..d].iter().map(|v| v.exp()).collect();
    let eta = z[d].exp();
    let n = points.nrows() as f64;
    let r = correlation_matrix(points, &thetas, eta);
    let l = match r.cholesky_into(UPLO::Lower) {
        Ok(l) => l,
        Err(_) => return (f64::INFINITY, SIGMA2_FLOOR),
    };
    let w = match l.solve_triangular(UPLO::Lower, Diag::NonUnit, targets) {
        Ok(w) => w,
        Err(_) => return (f64::INFINITY, SIGMA2_FLOOR),
    };
    let sigma2 = (w.iter().map(|v| v * v).sum::<f64>() / n).max(SIGMA2_FLOOR);
    let log_det_half: f64 = (0..points.nrows()).map(|i| l[[i, i]].ln()).sum();
    let nll = 0.5 * n * sigma2.ln()
        + log_det_half
        + 0.5 * n * (1.0 + (2.0 * std::f64::consts::PI).ln());
    (nll, sigma2)
}

/// Deterministic Latin grid of start points in log space: each coordinate
/// visits `n_starts` evenly spaced levels, permuted by coprime strides so
/// no two starts share a level in any coordinate.
pub fn start_grid(ranges: &[f64], options: &FitOptions) -> Vec<Vec<f64>> {
    let d = ranges.len();
    let n = options.n_starts.max(1);
    // Starts live in an inner sub-box of the search bounds; the local
    // searches may still move out to the full bounds.
    let theta_lo: Vec<f64> = ranges.iter().map(|r| (0.05 * r).ln()).collect();
    let theta_hi: Vec<f64> = ranges.iter().map(|r| (10.0 * r).ln()).collect();
    let eta_lo = (options.nugget_ratio_bounds.0.max(1e-10) * 10.0).ln();
    let eta_hi = (options.nugget_ratio_bounds.1.min(1e-2)).ln();
    let stride = |i: usize| -> usize {
        // Odd strides are coprime with any power-of-two grid; for other
        // grid sizes collisions only cost start diversity, not correctness.
        2 * (i % n) + 1
    };
    (0..n)
        .map(|s| {
            let mut z = Vec::with_capacity(d + 1);
            for i in 0..d {
                let level = (s * stride(i) + i) % n;
                let frac = (level as f64 + 0.5) / n as f64;
                z.push(theta_lo[i] + frac * (theta_hi[i] - theta_lo[i]));
            }
            let level = (s * stride(d) + d) % n;
            let frac = (level as f64 + 0.5) / n as f64;
            z.push(eta_lo + frac * (eta_hi - eta_lo));
            z
        })
        .collect()
}

fn clamp_to_box(z: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in z.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

/// Nelder-Mead minimization with box constraints enforced by clamping
/// every evaluation point. Returns the best point and its value.
fn nelder_mead<F>(
    mut f: F,
    start: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_evals: usize,
) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = start.len();
    let mut evals = 0;
    let mut eval = |z: &[f64], evals: &mut usize| {
        *evals += 1;
        let mut zc = z.to_vec();
        clamp_to_box(&mut zc, lo, hi);
        f(&zc)
    };

    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..dim {
        let mut v = start.to_vec();
        v[i] += 0.25;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|z| eval(z, &mut evals)).collect();

    while evals < max_evals {
        // Order the simplex best → worst.
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[dim] - values[0];
        let diameter: f64 = (0..dim)
            .map(|i| (simplex[dim][i] - simplex[0][i]).abs())
            .fold(0.0, f64::max);
        if spread.abs() < 1e-10 && diameter < 1e-9 {
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|i| simplex[..dim].iter().map(|z| z[i]).sum::<f64>() / dim as f64)
            .collect();
        let at = |coef: f64| -> Vec<f64> {
            (0..dim)
                .map(|i| centroid[i] + coef * (centroid[i] - simplex[dim][i]))
                .collect()
        };

        let reflected = at(1.0);
        let fr = eval(&reflected, &mut evals);
        if fr < values[0] {
            let expanded = at(2.0);
            let fe = eval(&expanded, &mut evals);
            if fe < fr {
                simplex[dim] = expanded;
                values[dim] = fe;
            } else {
                simplex[dim] = reflected;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = fr;
        } else {
            let contracted = if fr < values[dim] { at(0.5) } else { at(-0.5) };
            let fc = eval(&contracted, &mut evals);
            if fc < values[dim].min(fr) {
                simplex[dim] = contracted;
                values[dim] = fc;
            } else {
                // Shrink toward the best vertex.
                for k in 1..=dim {
                    for i in 0..dim {
                        simplex[k][i] = simplex[0][i] + 0.5 * (simplex[k][i] - simplex[0][i]);
                    }
                    values[k] = eval(&simplex[k], &mut evals);
                }
            }
        }
    }

    let best = (0..=dim)
        .min_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap())
        .unwrap();
    let mut z = simplex[best].clone();
    clamp_to_box(&mut z, lo, hi);
    (z, values[best])
}

/// Fit GP hyperparameters by profiled maximum likelihood.
pub fn fit_gp(
    design: &DesignMatrix,
    targets: &Array1<f64>,
    options: &FitOptions,
) -> Result<GpSurrogate> {
    let points = design.points();
    if targets.len() != points.nrows() {
        return Err(Error::DimensionMismatch {
            expected: points.nrows(),
            actual: targets.len(),
            context: "targets vs design size",
        });
    }
    if points.nrows() < 2 {
        return Err(Error::InvalidDesign(
            "fitting needs at least two observations".into(),
        ));
    }
    let ranges = design.space().ranges();
    let d = ranges.len();
    let lo: Vec<f64> = ranges
        .iter()
        .map(|r| (options.lengthscale_factors.0 * r).ln())
        .chain(std::iter::once(options.nugget_ratio_bounds.0.ln()))
        .collect();
    let hi: Vec<f64> = ranges
        .iter()
        .map(|r| (options.lengthscale_factors.1 * r).ln())
        .chain(std::iter::once(options.nugget_ratio_bounds.1.ln()))
        .collect();

    let objective = |z: &[f64]| profiled_nll(points.view(), targets, z).0;

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in start_grid(&ranges, options) {
        let (z, v) = nelder_mead(objective, &start, &lo, &hi, options.max_evals);
        if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
            best = Some((z, v));
        }
    }
    let (z, _) = best.expect("at least one start");
    let (_, sigma2) = profiled_nll(points.view(), targets, &z);
    let thetas: Vec<f64> = z[..d].iter().map(|v| v.exp()).collect();
    let eta = z[d].exp();
    let params = KernelParams::new(thetas, sigma2, eta * sigma2)?;
    let ll = log_marginal_likelihood(points.view(), targets.view(), &params);
    let mut gp = GpSurrogate::with_params(design, targets, params)?;
    gp.set_log_likelihood(ll);
    Ok(gp)
}
