//! End-to-end error quantification for sensitivity maps and GSI.
//!
//! The drivers separate two error sources on a common distribution object:
//! trajectory index `j` varies the GP (metamodeling error), bootstrap
//! replicate index `b` varies the pick-freeze resample (estimation error).
//! Replicate `b = 0` is always the un-resampled estimate, so the `b = 0`
//! slice is the metamodel-only distribution.
//!
//! Two estimation cores share identical inputs and produce equal results:
//! the basis-derived core works on p coefficient matrices and reprojects,
//! the dimension-wise core reconstructs every output dimension and runs
//! the scalar estimators per dimension. The first is the fast path; the
//! second exists as its per-dimension oracle and cost baseline.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::basis::BasisExpansion;
use crate::gp::{sample_trajectories, SamplingMode, TrajectoryBatch, VectorGp};
use crate::models_io::InputSpace;
use crate::pickfreeze::{
    bootstrap_indices, make_pf_design, scalar_moments, scalar_total_jansen, variance_floor,
    vector_closed_pf, vector_total_jansen, IndexSet, PfOutputs,
};
use crate::sensitivity::{gsi, quadratic_forms, reproject_map, GsiKind};
use crate::{seed, Error, Result};

/// Whether GSI / map denominators follow each replicate (empirical) or stay
/// at the covariance of the training-data coefficients (fixed).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    Empirical,
    Fixed,
}

/// Configuration of one error-quantification run for one index set.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Pick-freeze sample size.
    pub n_pf: usize,
    /// Number of GP trajectories N_Z.
    pub n_traj: usize,
    /// Number of replicates N_X including the un-resampled one.
    pub n_boot: usize,
    pub sampling: SamplingMode,
    pub covariance: CovarianceMode,
    pub seed: u64,
    /// Also estimate total indices (extends the trajectory locations from
    /// 2 n_pf to 3 n_pf points).
    pub include_total: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pf < 2 {
            return Err(Error::InvalidDesign("n_pf must be at least 2".into()));
        }
        if self.n_traj < 1 || self.n_boot < 1 {
            return Err(Error::InvalidDesign(
                "trajectory and replicate counts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Distributions of sensitivity estimates indexed by output dimension ℓ,
/// trajectory j, and replicate b. Missing (degenerate) entries are NaN.
#[derive(Debug, Clone)]
pub struct IndexDistribution {
    /// Closed-index maps, shape (m, N_Z, N_X).
    maps: Array3<f64>,
    /// Total-index maps, same shape, when totals were requested.
    maps_total: Option<Array3<f64>>,
    /// Closed GSI, shape (N_Z, N_X).
    gsi: Array2<f64>,
    gsi_total: Option<Array2<f64>>,
    /// Number of trajectory samplings performed to build this object.
    trajectory_draws: usize,
}

impl IndexDistribution {
    pub fn maps(&self) -> &Array3<f64> {
        &self.maps
    }

    pub fn maps_total(&self) -> Option<&Array3<f64>> {
        self.maps_total.as_ref()
    }

    pub fn gsi(&self) -> &Array2<f64> {
        &self.gsi
    }

    pub fn gsi_total(&self) -> Option<&Array2<f64>> {
        self.gsi_total.as_ref()
    }

    pub fn output_dims(&self) -> usize {
        self.maps.len_of(Axis(0))
    }

    pub fn n_trajectories(&self) -> usize {
        self.maps.len_of(Axis(1))
    }

    pub fn n_replicates(&self) -> usize {
        self.maps.len_of(Axis(2))
    }

    pub fn trajectory_draws(&self) -> usize {
        self.trajectory_draws
    }

    /// Metamodel-only map slice (m, N_Z): replicate b = 0 only.
    pub fn metamodel_only_maps(&self) -> ArrayView2<'_, f64> {
        self.maps.slice(s![.., .., 0])
    }

    /// Metamodel-only GSI values (length N_Z).
    pub fn metamodel_only_gsi(&self) -> ArrayView1<'_, f64> {
        self.gsi.slice(s![.., 0])
    }
}

/// Which slice of an [`IndexDistribution`] a summary covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Replicate b = 0 only: variability across GP trajectories.
    MetamodelOnly,
    /// All (j, b) pairs: metamodeling and estimation error combined.
    Overall,
}

/// Coefficient trajectories rearranged into the pick-freeze sample blocks.
#[derive(Debug, Clone)]
pub struct PfCoefficientSamples {
    /// Trajectories at x_hat, shape (N_Z, n_pf, p).
    pub y: Array3<f64>,
    /// Trajectories at x_star, same shape.
    pub y_star: Array3<f64>,
    /// Trajectories at x_star_total (complement frozen), when present.
    pub y_star_total: Option<Array3<f64>>,
}

/// Split a trajectory batch sampled at the concatenated PF locations
/// (x_hat rows, then x_star rows, then optionally x_star_total rows).
pub fn split_trajectories(batch: &TrajectoryBatch, n_pf: usize) -> Result<PfCoefficientSamples> {
    let blocks = batch.n_points() / n_pf;
    if batch.n_points() != n_pf * blocks || !(2..=3).contains(&blocks) {
        return Err(Error::DimensionMismatch {
            expected: 2 * n_pf,
            actual: batch.n_points(),
            context: "trajectory points vs 2 or 3 PF blocks",
        });
    }
    let v = batch.values();
    Ok(PfCoefficientSamples {
        y: v.slice(s![.., ..n_pf, ..]).to_owned(),
        y_star: v.slice(s![.., n_pf..2 * n_pf, ..]).to_owned(),
        y_star_total: (blocks == 3).then(|| v.slice(s![.., 2 * n_pf.., ..]).to_owned()),
    })
}

fn resample_rows(a: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), a.ncols()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&a.row(r));
    }
    out
}

/// Per-trajectory bootstrap seed; shared by both estimation cores so their
/// replicates are built from identical resamples.
fn bootstrap_seed(master: u64, trajectory: usize) -> u64 {
    seed::derive(master, &[seed::stream::BOOTSTRAP, trajectory as u64])
}

/// Results of one (j, b) cell.
struct CellEstimate {
    map: Array1<f64>,
    map_total: Option<Array1<f64>>,
    gsi: f64,
    gsi_total: Option<f64>,
}

impl CellEstimate {
    fn missing(m: usize, with_total: bool) -> Self {
        Self {
            map: Array1::from_elem(m, f64::NAN),
            map_total: with_total.then(|| Array1::from_elem(m, f64::NAN)),
            gsi: f64::NAN,
            gsi_total: with_total.then(|| f64::NAN),
        }
    }
}

fn bd_cell(
    y: Array2<f64>,
    y_star: Array2<f64>,
    y_star_total: Option<ArrayView2<f64>>,
    components: &Array2<f64>,
    gram: &Array2<f64>,
    fixed_cov: Option<&Array2<f64>>,
) -> CellEstimate {
    let m = components.ncols();
    let with_total = y_star_total.is_some();
    let t_u = y_star_total.map(|yt| vector_total_jansen(y.view(), yt));
    let outputs = match PfOutputs::new(y, y_star) {
        Ok(o) => o,
        Err(_) => return CellEstimate::missing(m, with_total),
    };
    let est = match vector_closed_pf(&outputs) {
        Ok(e) => e,
        Err(_) => return CellEstimate::missing(m, with_total),
    };
    let den_matrix = fixed_cov.unwrap_or(&est.cov);
    let map = match reproject_map(&est.d_u, den_matrix, components) {
        Ok(sm) => sm.values().clone(),
        Err(_) => Array1::from_elem(m, f64::NAN),
    };
    let gsi_value = gsi(&est.d_u, den_matrix, gram, GsiKind::Closed)
        .map(|g| g.value)
        .unwrap_or(f64::NAN);
    let (map_total, gsi_total) = match &t_u {
        Some(t) => {
            let mt = reproject_map(t, den_matrix, components)
                .map(|sm| sm.values().clone())
                .unwrap_or_else(|_| Array1::from_elem(m, f64::NAN));
            let gt = gsi(t, den_matrix, gram, GsiKind::Total)
                .map(|g| g.value)
                .unwrap_or(f64::NAN);
            (Some(mt), Some(gt))
        }
        None => (None, None),
    };
    CellEstimate {
        map,
        map_total,
        gsi: gsi_value,
        gsi_total,
    }
}

/// One trajectory's slab of results, shape (m, N_X) per quantity.
struct TrajectorySlab {
    maps: Array2<f64>,
    maps_total: Option<Array2<f64>>,
    gsi: Array1<f64>,
    gsi_total: Option<Array1<f64>>,
}

fn assemble(
    slabs: Vec<TrajectorySlab>,
    m: usize,
    n_traj: usize,
    n_boot: usize,
    with_total: bool,
    trajectory_draws: usize,
) -> IndexDistribution {
    let mut maps = Array3::zeros((m, n_traj, n_boot));
    let mut maps_total = with_total.then(|| Array3::zeros((m, n_traj, n_boot)));
    let mut gsi_arr = Array2::zeros((n_traj, n_boot));
    let mut gsi_total = with_total.then(|| Array2::zeros((n_traj, n_boot)));
    for (j, slab) in slabs.into_iter().enumerate() {
        maps.slice_mut(s![.., j, ..]).assign(&slab.maps);
        gsi_arr.row_mut(j).assign(&slab.gsi);
        if let (Some(mt), Some(src)) = (maps_total.as_mut(), slab.maps_total.as_ref()) {
            mt.slice_mut(s![.., j, ..]).assign(src);
        }
        if let (Some(gt), Some(src)) = (gsi_total.as_mut(), slab.gsi_total.as_ref()) {
            gt.row_mut(j).assign(src);
        }
    }
    IndexDistribution {
        maps,
        maps_total,
        gsi: gsi_arr,
        gsi_total,
        trajectory_draws,
    }
}

/// Basis-derived estimation core: coefficient-level PF matrices per (j, b),
/// reprojected through the components. Cost is independent of m except for
/// the final O(p²m) reprojection.
pub fn estimate_basis_derived(
    samples: &PfCoefficientSamples,
    components: &Array2<f64>,
    gram: &Array2<f64>,
    cfg: &RunConfig,
    fixed_cov: Option<&Array2<f64>>,
) -> Result<IndexDistribution> {
    cfg.validate()?;
    let (n_traj, n_pf, p) = samples.y.dim();
    if components.nrows() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: components.nrows(),
            context: "components vs trajectory coefficients",
        });
    }
    let m = components.ncols();
    let with_total = samples.y_star_total.is_some();

    let slabs: Vec<TrajectorySlab> = (0..n_traj)
        .into_par_iter()
        .map(|j| {
            let y = samples.y.index_axis(Axis(0), j);
            let y_star = samples.y_star.index_axis(Axis(0), j);
            let y_tot = samples.y_star_total.as_ref().map(|a| a.index_axis(Axis(0), j));
            let boots = (cfg.n_boot > 1)
                .then(|| bootstrap_indices(n_pf, cfg.n_boot, bootstrap_seed(cfg.seed, j)));

            let mut maps = Array2::zeros((m, cfg.n_boot));
            let mut maps_total = with_total.then(|| Array2::zeros((m, cfg.n_boot)));
            let mut gsi_row = Array1::zeros(cfg.n_boot);
            let mut gsi_total_row = with_total.then(|| Array1::zeros(cfg.n_boot));
            for b in 0..cfg.n_boot {
                // b = 0 is the un-resampled (metamodel-only) estimate and
                // never touches the bootstrap index array.
                let cell = if b == 0 {
                    bd_cell(
                        y.to_owned(),
                        y_star.to_owned(),
                        y_tot,
                        components,
                        gram,
                        fixed_cov,
                    )
                } else {
                    let rows = boots.as_ref().expect("replicates imply bootstrap rows");
                    let rows = rows.row(b - 1);
                    let rows = rows.as_slice().expect("contiguous bootstrap row");
                    let yt = y_tot.map(|a| resample_rows(a, rows));
                    bd_cell(
                        resample_rows(y, rows),
                        resample_rows(y_star, rows),
                        yt.as_ref().map(|a| a.view()),
                        components,
                        gram,
                        fixed_cov,
                    )
                };
                maps.column_mut(b).assign(&cell.map);
                gsi_row[b] = cell.gsi;
                if let (Some(mt), Some(src)) = (maps_total.as_mut(), cell.map_total.as_ref()) {
                    mt.column_mut(b).assign(src);
                }
                if let (Some(gt), Some(v)) = (gsi_total_row.as_mut(), cell.gsi_total) {
                    gt[b] = v;
                }
            }
            TrajectorySlab {
                maps,
                maps_total,
                gsi: gsi_row,
                gsi_total: gsi_total_row,
            }
        })
        .collect();

    Ok(assemble(slabs, m, n_traj, cfg.n_boot, with_total, n_traj))
}

/// Reconstruct per-dimension outputs as an (m, n_pf) matrix so dimension
/// rows are contiguous: rec = Vᵀᵀ… i.e. rec[ℓ, k] = v_ℓ · a_k.
fn reconstruct_dimensionwise(coeffs: ArrayView2<f64>, components: &Array2<f64>) -> Array2<f64> {
    let (m, n) = (components.ncols(), coeffs.nrows());
    let mut rec = Array2::zeros((m, n));
    general_mat_mul(1.0, &components.t(), &coeffs.t(), 0.0, &mut rec);
    rec
}

/// Dimension-wise estimation core: the scalar PF estimators applied to
/// reconstructed outputs, independently for every output dimension. With
/// matched inputs its results equal the basis-derived core's (up to float
/// round-off); its cost scales with n_pf · m instead of p² · (n_pf + m).
pub fn estimate_dimension_wise(
    samples: &PfCoefficientSamples,
    components: &Array2<f64>,
    cfg: &RunConfig,
    fixed_cov: Option<&Array2<f64>>,
) -> Result<IndexDistribution> {
    cfg.validate()?;
    let (n_traj, n_pf, p) = samples.y.dim();
    if components.nrows() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: components.nrows(),
            context: "components vs trajectory coefficients",
        });
    }
    let m = components.ncols();
    let with_total = samples.y_star_total.is_some();
    // Fixed denominators per dimension, when the covariance is held at the
    // training-data value.
    let fixed_den = match fixed_cov {
        Some(c) => Some(quadratic_forms(c, components)?),
        None => None,
    };

    let slabs: Vec<TrajectorySlab> = (0..n_traj)
        .into_par_iter()
        .map(|j| {
            let rec_y = reconstruct_dimensionwise(samples.y.index_axis(Axis(0), j), components);
            let rec_ys =
                reconstruct_dimensionwise(samples.y_star.index_axis(Axis(0), j), components);
            let rec_yt = samples
                .y_star_total
                .as_ref()
                .map(|a| reconstruct_dimensionwise(a.index_axis(Axis(0), j), components));
            let boots = (cfg.n_boot > 1)
                .then(|| bootstrap_indices(n_pf, cfg.n_boot, bootstrap_seed(cfg.seed, j)));

            let mut maps = Array2::zeros((m, cfg.n_boot));
            let mut maps_total = with_total.then(|| Array2::zeros((m, cfg.n_boot)));
            let mut gsi_row = Array1::zeros(cfg.n_boot);
            let mut gsi_total_row = with_total.then(|| Array1::zeros(cfg.n_boot));
            let mut buf_y = vec![0.0; n_pf];
            let mut buf_ys = vec![0.0; n_pf];
            let mut buf_yt = vec![0.0; n_pf];
            for b in 0..cfg.n_boot {
                let rows = if b == 0 {
                    None
                } else {
                    let r = boots.as_ref().expect("replicates imply bootstrap rows");
                    Some(r.row(b - 1))
                };
                let mut num_sum = 0.0;
                let mut den_sum = 0.0;
                let mut tot_sum = 0.0;
                for l in 0..m {
                    let (f0, num, den_emp) = match &rows {
                        None => scalar_moments(rec_y.row(l), rec_ys.row(l)),
                        Some(rows) => {
                            let ry = rec_y.row(l);
                            let rys = rec_ys.row(l);
                            for (i, &k) in rows.iter().enumerate() {
                                buf_y[i] = ry[k];
                                buf_ys[i] = rys[k];
                            }
                            scalar_moments(
                                ArrayView1::from(&buf_y[..]),
                                ArrayView1::from(&buf_ys[..]),
                            )
                        }
                    };
                    let den = fixed_den.as_ref().map_or(den_emp, |fd| fd[l]);
                    let defined = den > variance_floor(f0);
                    maps[[l, b]] = if defined { num / den } else { f64::NAN };
                    num_sum += num;
                    den_sum += den;
                    if let Some(rt) = &rec_yt {
                        let t = match &rows {
                            None => scalar_total_jansen(rec_y.row(l), rt.row(l)),
                            Some(rows) => {
                                let ry = rec_y.row(l);
                                let rtl = rt.row(l);
                                for (i, &k) in rows.iter().enumerate() {
                                    buf_y[i] = ry[k];
                                    buf_yt[i] = rtl[k];
                                }
                                scalar_total_jansen(
                                    ArrayView1::from(&buf_y[..]),
                                    ArrayView1::from(&buf_yt[..]),
                                )
                            }
                        };
                        tot_sum += t;
                        if let Some(mt) = maps_total.as_mut() {
                            mt[[l, b]] = if defined { t / den } else { f64::NAN };
                        }
                    }
                }
                // GSI over an orthonormal basis: trace ratios reduce to
                // sums of the per-dimension numerators and denominators.
                gsi_row[b] = if den_sum > variance_floor(0.0) {
                    num_sum / den_sum
                } else {
                    f64::NAN
                };
                if let Some(gt) = gsi_total_row.as_mut() {
                    gt[b] = if den_sum > variance_floor(0.0) {
                        tot_sum / den_sum
                    } else {
                        f64::NAN
                    };
                }
            }
            TrajectorySlab {
                maps,
                maps_total,
                gsi: gsi_row,
                gsi_total: gsi_total_row,
            }
        })
        .collect();

    Ok(assemble(slabs, m, n_traj, cfg.n_boot, with_total, n_traj))
}

/// Seed of the PF design for replicate `rep` (0 in the bootstrap drivers).
fn design_seed(master: u64, rep: usize) -> u64 {
    seed::derive(master, &[seed::stream::PF_DESIGN, rep as u64])
}

/// Trajectory master seed for replicate `rep` (0 in the bootstrap drivers).
fn trajectory_master(master: u64, rep: usize) -> u64 {
    seed::derive(master, &[seed::stream::CRUDE_TRAJECTORY, rep as u64])
}

/// Sample the vector GP at the PF locations of replicate `rep`.
fn sample_pf_trajectories(
    vgp: &VectorGp,
    space: &InputSpace,
    u: &IndexSet,
    cfg: &RunConfig,
    rep: usize,
) -> Result<PfCoefficientSamples> {
    let design = make_pf_design(space, cfg.n_pf, u, design_seed(cfg.seed, rep))?;
    let mut query = design.x_hat().clone();
    query
        .append(Axis(0), design.x_star().view())
        .expect("PF blocks share shapes");
    if cfg.include_total {
        query
            .append(Axis(0), design.x_star_total().view())
            .expect("PF blocks share shapes");
    }
    let batch = sample_trajectories(
        vgp,
        query.view(),
        cfg.n_traj,
        cfg.sampling,
        trajectory_master(cfg.seed, rep),
    )?;
    split_trajectories(&batch, cfg.n_pf)
}

/// Build the PF design and sample coefficient trajectories at its
/// locations: the shared front half of the bootstrap drivers, exposed so a
/// benchmark can time the two estimation cores on identical pre-sampled
/// trajectories.
pub fn sample_pf_coefficients(
    vgp: &VectorGp,
    space: &InputSpace,
    u: &IndexSet,
    cfg: &RunConfig,
) -> Result<PfCoefficientSamples> {
    sample_pf_trajectories(vgp, space, u, cfg, 0)
}

fn fixed_covariance(basis: &BasisExpansion, cfg: &RunConfig) -> Option<Array2<f64>> {
    match cfg.covariance {
        CovarianceMode::Empirical => None,
        CovarianceMode::Fixed => Some(basis.coefficient_covariance()),
    }
}

/// Bootstrap-on-trajectories driver (the fast, basis-derived algorithm):
/// one PF design, N_Z trajectories of the coefficient GPs at its locations,
/// and per trajectory the un-resampled estimate plus N_X − 1 bootstrap
/// replicates.
pub fn run_bootstrap_on_trajectories(
    vgp: &VectorGp,
    basis: &BasisExpansion,
    space: &InputSpace,
    u: &IndexSet,
    cfg: &RunConfig,
) -> Result<IndexDistribution> {
    cfg.validate()?;
    if vgp.n_coefficients() != basis.n_components() {
        return Err(Error::DimensionMismatch {
            expected: basis.n_components(),
            actual: vgp.n_coefficients(),
            context: "surrogates vs basis components",
        });
    }
    let samples = sample_pf_trajectories(vgp, space, u, cfg, 0)?;
    let fixed = fixed_covariance(basis, cfg);
    estimate_basis_derived(
        &samples,
        basis.components(),
        basis.gram(),
        cfg,
        fixed.as_ref(),
    )
}

/// Dimension-wise driver: identical design, trajectories, and bootstrap
/// resamples as [`run_bootstrap_on_trajectories`], but the per-output-dimension scalar
/// estimation loop. Its maps match `run_bootstrap_on_trajectories`'s; only its cost
/// differs. Assumes an orthonormal basis for the GSI reduction.
pub fn run_dimension_wise_reference(
    vgp: &VectorGp,
    basis: &BasisExpansion,
    space: &InputSpace,
    u: &IndexSet,
    cfg: &RunConfig,
) -> Result<IndexDistribution> {
    cfg.validate()?;
    let samples = sample_pf_trajectories(vgp, space, u, cfg, 0)?;
    let fixed = fixed_covariance(basis, cfg);
    estimate_dimension_wise(&samples, basis.components(), cfg, fixed.as_ref())
}

/// Crude reference driver: a fresh PF design and fresh trajectories for
/// every replicate, no bootstrap. Samples the product probability space
/// directly at a cost of N_X × N_Z trajectory draws.
pub fn run_crude_resampling(
    vgp: &VectorGp,
    basis: &BasisExpansion,
    space: &InputSpace,
    u: &IndexSet,
    cfg: &RunConfig,
) -> Result<IndexDistribution> {
    cfg.validate()?;
    let fixed = fixed_covariance(basis, cfg);
    let inner = RunConfig {
        n_boot: 1,
        ..cfg.clone()
    };
    let mut per_rep = Vec::with_capacity(cfg.n_boot);
    for rep in 0..cfg.n_boot {
        let samples = sample_pf_trajectories(vgp, space, u, &inner, rep)?;
        per_rep.push(estimate_basis_derived(
            &samples,
            basis.components(),
            basis.gram(),
            &inner,
            fixed.as_ref(),
        )?);
    }
    let m = per_rep[0].output_dims();
    let with_total = per_rep[0].maps_total.is_some();
    let mut maps = Array3::zeros((m, cfg.n_traj, cfg.n_boot));
    let mut maps_total = with_total.then(|| Array3::zeros((m, cfg.n_traj, cfg.n_boot)));
    let mut gsi_arr = Array2::zeros((cfg.n_traj, cfg.n_boot));
    let mut gsi_total = with_total.then(|| Array2::zeros((cfg.n_traj, cfg.n_boot)));
    for (rep, dist) in per_rep.iter().enumerate() {
        maps.slice_mut(s![.., .., rep])
            .assign(&dist.maps.index_axis(Axis(2), 0));
        gsi_arr
            .column_mut(rep)
            .assign(&dist.gsi.index_axis(Axis(1), 0));
        if let (Some(mt), Some(src)) = (maps_total.as_mut(), dist.maps_total.as_ref()) {
            mt.slice_mut(s![.., .., rep])
                .assign(&src.index_axis(Axis(2), 0));
        }
        if let (Some(gt), Some(src)) = (gsi_total.as_mut(), dist.gsi_total.as_ref()) {
            gt.column_mut(rep).assign(&src.index_axis(Axis(1), 0));
        }
    }
    Ok(IndexDistribution {
        maps,
        maps_total,
        gsi: gsi_arr,
        gsi_total,
        trajectory_draws: cfg.n_boot * cfg.n_traj,
    })
}

/// Five-number boxplot summary with 1.5·IQR whiskers truncated to the data
/// range, plus 5th/95th percentiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxplotSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub p5: f64,
    pub p95: f64,
    pub n_outliers: usize,
    /// Count of missing (NaN) entries excluded from the summary.
    pub n_missing: usize,
    /// Count of finite entries summarized.
    pub n: usize,
}

impl BoxplotSummary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Percentile of sorted data by linear interpolation at rank
/// 1 + (n − 1)·p (so {1..100} gives median 50.5, q1 25.75, q3 75.25).
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Summarize a sample, excluding NaN entries (reported as missing).
pub fn summarize_values<I: IntoIterator<Item = f64>>(values: I) -> Result<BoxplotSummary> {
    let mut finite = Vec::new();
    let mut n_missing = 0usize;
    for v in values {
        if v.is_nan() {
            n_missing += 1;
        } else {
            finite.push(v);
        }
    }
    if finite.is_empty() {
        return Err(Error::EmptySummary("no finite values to summarize".into()));
    }
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q1 = percentile(&finite, 0.25);
    let median = percentile(&finite, 0.5);
    let q3 = percentile(&finite, 0.75);
    let iqr = q3 - q1;
    let fence_low = q1 - 1.5 * iqr;
    let fence_high = q3 + 1.5 * iqr;
    let min = finite[0];
    let max = finite[finite.len() - 1];
    let n_outliers = finite
        .iter()
        .filter(|&&v| v < fence_low || v > fence_high)
        .count();
    Ok(BoxplotSummary {
        median,
        q1,
        q3,
        whisker_low: fence_low.max(min),
        whisker_high: fence_high.min(max),
        p5: percentile(&finite, 0.05),
        p95: percentile(&finite, 0.95),
        n_outliers,
        n_missing,
        n: finite.len(),
    })
}

fn scope_values<'a>(
    maps: &'a Array3<f64>,
    dim: usize,
    scope: Scope,
) -> Box<dyn Iterator<Item = f64> + 'a> {
    match scope {
        Scope::MetamodelOnly => Box::new(maps.slice(s![dim, .., 0]).to_vec().into_iter()),
        Scope::Overall => Box::new(maps.slice(s![dim, .., ..]).iter().copied().collect::<Vec<_>>().into_iter()),
    }
}

/// Boxplot summaries of the closed-index map, one per output dimension.
pub fn summarize_maps(dist: &IndexDistribution, scope: Scope) -> Result<Vec<BoxplotSummary>> {
    (0..dist.output_dims())
        .map(|l| summarize_values(scope_values(&dist.maps, l, scope)))
        .collect()
}

/// Boxplot summaries of the total-index map, when totals were estimated.
pub fn summarize_maps_total(
    dist: &IndexDistribution,
    scope: Scope,
) -> Result<Option<Vec<BoxplotSummary>>> {
    match &dist.maps_total {
        None => Ok(None),
        Some(maps) => (0..dist.output_dims())
            .map(|l| summarize_values(scope_values(maps, l, scope)))
            .collect::<Result<Vec<_>>>()
            .map(Some),
    }
}

/// Boxplot summary of the GSI distribution.
pub fn summarize_gsi(dist: &IndexDistribution, scope: Scope) -> Result<BoxplotSummary> {
    match scope {
        Scope::MetamodelOnly => summarize_values(dist.metamodel_only_gsi().to_vec()),
        Scope::Overall => summarize_values(dist.gsi.iter().copied()),
    }
}

/// Relative contributions of the two error sources, from IQR widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attribution {
    pub metamodel_share: f64,
    pub estimation_share: f64,
}

/// Split total spread into metamodel and estimation shares:
/// estimation = max(IQR_overall − IQR_meta, 0) / IQR_overall. Returns None
/// when the overall width is (numerically) zero.
pub fn error_attribution(
    metamodel: &BoxplotSummary,
    overall: &BoxplotSummary,
) -> Option<Attribution> {
    let width_overall = overall.iqr();
    if !(width_overall > 1e-300) {
        return None;
    }
    let estimation_share = ((width_overall - metamodel.iqr()).max(0.0)) / width_overall;
    Some(Attribution {
        metamodel_share: 1.0 - estimation_share,
        estimation_share,
    })
}

/// Predicted floating-point operation counts of the two estimation cores
/// for one (j, b) cell, and the guaranteed lower bound on their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub cost_dw: u64,
    pub cost_bd: u64,
    pub lower_bound_ratio: f64,
}

/// Flop model: dimension-wise costs 4(p+2)·n_pf·m, basis-derived costs
/// 2p(3p+1)·n_pf + 3p(p+1)·m, and their ratio is at least the harmonic
/// mean of 2·n_pf and m divided by 3p.
pub fn predicted_costs(p: usize, n_pf: usize, m: usize) -> CostModel {
    let (pu, nu, mu) = (p as u64, n_pf as u64, m as u64);
    let cost_dw = 4 * (pu + 2) * nu * mu;
    let cost_bd = 2 * pu * (3 * pu + 1) * nu + 3 * pu * (pu + 1) * mu;
    let a = 2.0 * n_pf as f64;
    let b = m as f64;
    let harmonic = 2.0 * a * b / (a + b);
    CostModel {
        cost_dw,
        cost_bd,
        lower_bound_ratio: harmonic / (3.0 * p as f64),
    }
}
