//! Input spaces, designs of experiments, built-in test models and CSV I/O
//! for functional output data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::{seed, Error, Result};

/// Box domain with independent uniform inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSpace {
    bounds: Vec<(f64, f64)>,
}

impl InputSpace {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidDesign("input space needs d >= 1".into()));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidDesign(format!(
                    "variable {}: bounds ({lo}, {hi}) must satisfy lower < upper",
                    i + 1
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// Unit hypercube [0,1]^d.
    pub fn unit(dims: usize) -> Result<Self> {
        Self::new(vec![(0.0, 1.0); dims])
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Width of each variable's interval.
    pub fn ranges(&self) -> Vec<f64> {
        self.bounds.iter().map(|&(lo, hi)| hi - lo).collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dims()
            && point
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }
}

/// n x d matrix of input points inside an [`InputSpace`].
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    points: Array2<f64>,
    space: InputSpace,
}

impl DesignMatrix {
    pub fn new(points: Array2<f64>, space: InputSpace) -> Result<Self> {
        if points.ncols() != space.dims() {
            return Err(Error::DimensionMismatch {
                expected: space.dims(),
                actual: points.ncols(),
                context: "design columns vs input space dims",
            });
        }
        for row in points.rows() {
            let inside = row
                .iter()
                .zip(&space.bounds)
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi);
            if !inside {
                return Err(Error::InvalidDesign(
                    "design point outside the input space bounds".into(),
                ));
            }
        }
        Ok(Self { points, space })
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn space(&self) -> &InputSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    /// First `n` rows, used for nested DoE-size sweeps.
    pub fn prefix(&self, n: usize) -> Result<DesignMatrix> {
        if n > self.len() {
            return Err(Error::InvalidDesign(format!(
                "prefix of {n} rows requested from a design of {}",
                self.len()
            )));
        }
        Ok(DesignMatrix {
            points: self.points.slice(ndarray::s![..n, ..]).to_owned(),
            space: self.space.clone(),
        })
    }

    /// Stack two designs over the same space (DoE enrichment).
    pub fn concat(&self, other: &DesignMatrix) -> Result<DesignMatrix> {
        if self.space != other.space {
            return Err(Error::InvalidDesign(
                "cannot concatenate designs over different spaces".into(),
            ));
        }
        let points = ndarray::concatenate(Axis(0), &[self.points.view(), other.points.view()])
            .expect("column counts match");
        Ok(DesignMatrix {
            points,
            space: self.space.clone(),
        })
    }
}

/// Plain stratified Latin hypercube sample: each column's n values occupy
/// distinct equiprobable strata in a random permutation.
pub fn lhs_sample(space: &InputSpace, n: usize, seed: u64) -> Result<DesignMatrix> {
    if n < 2 {
        return Err(Error::InvalidDesign(format!(
            "LHS needs n >= 2 points, got {n}"
        )));
    }
    let d = space.dims();
    let mut rng = seed::rng_from(seed);
    let mut points = Array2::zeros((n, d));
    for j in 0..d {
        let (lo, hi) = space.bounds[j];
        // stratum values, then Fisher-Yates shuffle
        let mut col: Vec<f64> = (0..n)
            .map(|i| {
                let u: f64 = rng.gen();
                lo + (hi - lo) * ((i as f64 + u) / n as f64)
            })
            .collect();
        for i in (1..n).rev() {
            let k = rng.gen_range(0..=i);
            col.swap(i, k);
        }
        for i in 0..n {
            points[[i, j]] = col[i];
        }
    }
    DesignMatrix::new(points, space.clone())
}

/// i.i.d. uniform draws within the bounds.
pub fn mc_sample(space: &InputSpace, n: usize, seed: u64) -> Result<DesignMatrix> {
    if n < 1 {
        return Err(Error::InvalidDesign("MC sample needs n >= 1".into()));
    }
    let d = space.dims();
    let mut rng = seed::rng_from(seed);
    let mut points = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            let (lo, hi) = space.bounds[j];
            points[[i, j]] = lo + (hi - lo) * rng.gen::<f64>();
        }
    }
    DesignMatrix::new(points, space.clone())
}

/// n x m matrix of functional outputs, one row per design point.
#[derive(Debug, Clone)]
pub struct FunctionalOutputs {
    values: Array2<f64>,
    grid: Option<Vec<f64>>,
}

impl FunctionalOutputs {
    pub fn new(values: Array2<f64>, grid: Option<Vec<f64>>) -> Result<Self> {
        if let Some(g) = &grid {
            if g.len() != values.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: values.ncols(),
                    actual: g.len(),
                    context: "grid length vs output columns",
                });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateData(
                "functional outputs contain non-finite entries".into(),
            ));
        }
        Ok(Self { values, grid })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn grid(&self) -> Option<&[f64]> {
        self.grid.as_deref()
    }

    pub fn n_points(&self) -> usize {
        self.values.nrows()
    }

    pub fn output_dims(&self) -> usize {
        self.values.ncols()
    }
}

/// Built-in analytical test models with known sensitivity structure.
#[derive(Debug, Clone)]
pub enum TestModel {
    /// d=2 on U(0,1)^2, grid t_l = 2*pi*l/m:
    /// y_l(x) = cos(t_l) x1 + sin(t_l) x2.
    AdditiveSine { output_dims: usize },
    /// Additive sine plus a coupling term c * x1 * x2.
    Interaction { output_dims: usize, coupling: f64 },
    /// Outputs read from a stored CSV table, keyed by design row.
    ExternalTable { path: std::path::PathBuf },
}

impl TestModel {
    pub fn dims(&self) -> Option<usize> {
        match self {
            TestModel::AdditiveSine { .. } | TestModel::Interaction { .. } => Some(2),
            TestModel::ExternalTable { .. } => None,
        }
    }

    /// Output grid on [0, 2*pi), periodic so sums of cos^2 and sin^2 agree.
    pub fn sine_grid(m: usize) -> Vec<f64> {
        (0..m)
            .map(|l| 2.0 * std::f64::consts::PI * l as f64 / m as f64)
            .collect()
    }
}

/// Evaluate a test model over a design.
pub fn eval_test_model(model: &TestModel, design: &DesignMatrix) -> Result<FunctionalOutputs> {
    if let Some(d) = model.dims() {
        if design.space().dims() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: design.space().dims(),
                context: "test model dims vs design dims",
            });
        }
    }
    match model {
        TestModel::AdditiveSine { output_dims } => {
            eval_sine(design, *output_dims, 0.0)
        }
        TestModel::Interaction {
            output_dims,
            coupling,
        } => eval_sine(design, *output_dims, *coupling),
        TestModel::ExternalTable { path } => {
            let outputs = read_outputs(path)?;
            if outputs.n_points() != design.len() {
                return Err(Error::DimensionMismatch {
                    expected: design.len(),
                    actual: outputs.n_points(),
                    context: "external table rows vs design rows",
                });
            }
            Ok(outputs)
        }
    }
}

fn eval_sine(design: &DesignMatrix, m: usize, coupling: f64) -> Result<FunctionalOutputs> {
    let grid = TestModel::sine_grid(m);
    let n = design.len();
    let mut values = Array2::zeros((n, m));
    for i in 0..n {
        let x1 = design.points()[[i, 0]];
        let x2 = design.points()[[i, 1]];
        for (l, &t) in grid.iter().enumerate() {
            values[[i, l]] = t.cos() * x1 + t.sin() * x2 + coupling * x1 * x2;
        }
    }
    FunctionalOutputs::new(values, Some(grid))
}

/// Analytic first-order sensitivity map of the additive sine model:
/// S_1(t) = cos^2(t), S_2(t) = sin^2(t).
pub fn additive_sine_first_order(variable: usize, grid: &[f64]) -> Array1<f64> {
    grid.iter()
        .map(|&t| match variable {
            0 => t.cos().powi(2),
            _ => t.sin().powi(2),
        })
        .collect()
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, message: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message,
    }
}

/// Write functional outputs as CSV. A leading `#`-prefixed row holds the
/// grid coordinates when present. `{}` formatting on f64 emits the shortest
/// representation that round-trips exactly.
pub fn write_outputs<P: AsRef<Path>>(outputs: &FunctionalOutputs, path: P) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::new();
    if let Some(grid) = outputs.grid() {
        buf.push('#');
        for (i, g) in grid.iter().enumerate() {
            if i > 0 {
                buf.push(',');
            }
            let _ = write!(buf, "{g}");
        }
        buf.push('\n');
    }
    for row in outputs.values().rows() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                buf.push(',');
            }
            let _ = write!(buf, "{v}");
        }
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// Read functional outputs from CSV written by [`write_outputs`] (or any
/// rectangular numeric CSV, with an optional `#`-prefixed grid row).
pub fn read_outputs<P: AsRef<Path>>(path: P) -> Result<FunctionalOutputs> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut grid = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if grid.is_some() || !rows.is_empty() {
                return Err(parse_err(
                    path,
                    format!("line {}: grid row must come first", lineno + 1),
                ));
            }
            grid = Some(parse_numeric_row(path, lineno, rest)?);
            continue;
        }
        let row = parse_numeric_row(path, lineno, line)?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    path,
                    format!(
                        "line {}: ragged row, expected {} cells, got {}",
                        lineno + 1,
                        first.len(),
                        row.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no data rows".into()));
    }
    let m = rows[0].len();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let values = Array2::from_shape_vec((rows.len(), m), flat).expect("rectangular");
    FunctionalOutputs::new(values, grid)
}

fn parse_numeric_row(path: &Path, lineno: usize, line: &str) -> Result<Vec<f64>> {
    line.split(',')
        .map(|cell| {
            cell.trim().parse::<f64>().map_err(|_| {
                parse_err(
                    path,
                    format!("line {}: non-numeric cell {:?}", lineno + 1, cell.trim()),
                )
            })
        })
        .collect()
}

/// Write a design as CSV with a variable-name header row.
pub fn write_design<P: AsRef<Path>>(design: &DesignMatrix, path: P) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::new();
    let names: Vec<String> = (1..=design.space().dims())
        .map(|j| format!("x{j}"))
        .collect();
    buf.push_str(&names.join(","));
    buf.push('\n');
    for row in design.points().rows() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                buf.push(',');
            }
            let _ = write!(buf, "{v}");
        }
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// Read a design CSV (header row of variable names) into a space.
pub fn read_design<P: AsRef<Path>>(path: P, space: &InputSpace) -> Result<DesignMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if lineno == 0 && line.split(',').any(|c| c.trim().parse::<f64>().is_err()) {
            continue; // header
        }
        rows.push(parse_numeric_row(path, lineno, line)?);
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no data rows".into()));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(parse_err(path, "ragged rows".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let points = Array2::from_shape_vec((rows.len(), d), flat).expect("rectangular");
    DesignMatrix::new(points, space.clone())
}
