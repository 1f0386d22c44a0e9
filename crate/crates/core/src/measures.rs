//! Probability measures, batch sampling, ground costs and dataset ingestion.
//!
//! Discrete measures are weighted point clouds; continuous measures are
//! Gaussians or finite Gaussian mixtures. Everything that the stochastic
//! solvers consume goes through [`MeasureSource`] and [`sample_batch`].

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{OtError, Result};

const SIMPLEX_TOL: f64 = 1e-9;
const SYMMETRY_TOL: f64 = 1e-12;

/// A weighted point cloud `Σ a_i δ_{x_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Array2<f64>,
    weights: Array1<f64>,
    labels: Option<Vec<usize>>,
    uniform: bool,
    cdf: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(OtError::InsufficientData { needed: 1, found: 0 });
        }
        if points.ncols() == 0 {
            return Err(OtError::InvalidInput("points have dimension zero".into()));
        }
        if weights.len() != n {
            return Err(OtError::DimensionMismatch {
                expected: n,
                found: weights.len(),
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(OtError::InvalidInput("non-finite point coordinate".into()));
        }
        check_simplex(weights.view(), "measure weights")?;

        let first = weights[0];
        let uniform = weights.iter().all(|&w| w == first);
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|&w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self {
            points,
            weights,
            labels: None,
            uniform,
            cdf,
        })
    }

    /// Uniform weights `1/n`.
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows().max(1);
        Self::new(points, Array1::from_elem(n, 1.0 / n as f64))
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(OtError::DimensionMismatch {
                expected: self.len(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Draw one support index with probability proportional to its weight.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let n = self.len();
        if self.uniform {
            return rng.random_range(0..n);
        }
        let total = self.cdf[n - 1];
        let r = rng.random::<f64>() * total;
        self.cdf.partition_point(|&c| c <= r).min(n - 1)
    }
}

/// Multivariate normal `N(mean, covariance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: Array1<f64>,
    covariance: Array2<f64>,
    chol: Array2<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: Array1<f64>, covariance: Array2<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(OtError::InvalidInput("Gaussian of dimension zero".into()));
        }
        if covariance.dim() != (d, d) {
            return Err(OtError::DimensionMismatch {
                expected: d,
                found: covariance.nrows(),
            });
        }
        check_spd(covariance.view(), "covariance")?;
        let m = to_dmatrix(covariance.view());
        let chol = m
            .cholesky()
            .ok_or_else(|| OtError::InvalidInput("covariance is not positive definite".into()))?;
        Ok(Self {
            mean,
            covariance,
            chol: from_dmatrix(&chol.l()),
        })
    }

    /// Standard normal in `d` dimensions.
    pub fn standard(d: usize) -> Result<Self> {
        Self::new(Array1::zeros(d), Array2::eye(d))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, mut row: ndarray::ArrayViewMut1<f64>) {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..d {
            let mut acc = self.mean[i];
            for (k, zk) in z.iter().enumerate().take(i + 1) {
                acc += self.chol[[i, k]] * zk;
            }
            row[i] = acc;
        }
    }
}

/// Finite mixture of Gaussians with simplex weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<(f64, GaussianMeasure)>,
}

impl GaussianMixture {
    pub fn new(components: Vec<(f64, GaussianMeasure)>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| OtError::InvalidInput("mixture without components".into()))?;
        let d = first.1.dim();
        if let Some((_, g)) = components.iter().find(|(_, g)| g.dim() != d) {
            return Err(OtError::DimensionMismatch {
                expected: d,
                found: g.dim(),
            });
        }
        let w = Array1::from_iter(components.iter().map(|(w, _)| *w));
        check_simplex(w.view(), "mixture weights")?;
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, GaussianMeasure)] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].1.dim()
    }
}

/// Anything the stochastic solvers can draw batches from.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureSource {
    Discrete(DiscreteMeasure),
    Gaussian(GaussianMeasure),
    Mixture(GaussianMixture),
}

impl MeasureSource {
    pub fn dim(&self) -> usize {
        match self {
            MeasureSource::Discrete(m) => m.dim(),
            MeasureSource::Gaussian(g) => g.dim(),
            MeasureSource::Mixture(m) => m.dim(),
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteMeasure> {
        match self {
            MeasureSource::Discrete(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, MeasureSource::Discrete(_))
    }
}

impl From<DiscreteMeasure> for MeasureSource {
    fn from(m: DiscreteMeasure) -> Self {
        MeasureSource::Discrete(m)
    }
}

impl From<GaussianMeasure> for MeasureSource {
    fn from(g: GaussianMeasure) -> Self {
        MeasureSource::Gaussian(g)
    }
}

impl From<GaussianMixture> for MeasureSource {
    fn from(m: GaussianMixture) -> Self {
        MeasureSource::Mixture(m)
    }
}

/// A batch of i.i.d. draws. `indices` is set only for discrete sources and
/// gives the support position of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub points: Array2<f64>,
    pub indices: Option<Vec<usize>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draw `p` i.i.d. points (with replacement for discrete sources).
pub fn sample_batch<R: Rng + ?Sized>(src: &MeasureSource, p: usize, rng: &mut R) -> Result<Batch> {
    if p == 0 {
        return Err(OtError::InvalidInput("batch size must be positive".into()));
    }
    let d = src.dim();
    if d == 0 {
        return Err(OtError::InvalidInput("source has dimension zero".into()));
    }
    let mut points = Array2::zeros((p, d));
    let indices = match src {
        MeasureSource::Discrete(m) => {
            let idx: Vec<usize> = (0..p).map(|_| m.sample_index(rng)).collect();
            for (mut row, &i) in points.rows_mut().into_iter().zip(&idx) {
                row.assign(&m.points.row(i));
            }
            Some(idx)
        }
        MeasureSource::Gaussian(g) => {
            for row in points.rows_mut() {
                g.sample_into(rng, row);
            }
            None
        }
        MeasureSource::Mixture(mix) => {
            let cdf: Vec<f64> = mix
                .components
                .iter()
                .scan(0.0, |acc, (w, _)| {
                    *acc += w;
                    Some(*acc)
                })
                .collect();
            let total = *cdf.last().unwrap();
            for row in points.rows_mut() {
                let r = rng.random::<f64>() * total;
                let k = cdf.partition_point(|&c| c <= r).min(cdf.len() - 1);
                mix.components[k].1.sample_into(rng, row);
            }
            None
        }
    };
    Ok(Batch { points, indices })
}

type CostCallable = dyn Fn(ArrayView1<f64>, ArrayView1<f64>) -> f64 + Send + Sync;

/// Ground cost `c(x, y)`.
#[derive(Clone)]
pub enum CostFn {
    SquaredEuclidean,
    Euclidean,
    Custom(Arc<CostCallable>),
}

impl fmt::Debug for CostFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl CostFn {
    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(ArrayView1<f64>, ArrayView1<f64>) -> f64 + Send + Sync + 'static,
    {
        CostFn::Custom(Arc::new(f))
    }

    pub fn name(&self) -> &'static str {
        match self {
            CostFn::SquaredEuclidean => "sqeuclidean",
            CostFn::Euclidean => "euclidean",
            CostFn::Custom(_) => "custom",
        }
    }

    #[inline]
    pub fn eval(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        match self {
            CostFn::SquaredEuclidean => sq_dist(x, y),
            CostFn::Euclidean => sq_dist(x, y).sqrt(),
            CostFn::Custom(f) => f(x, y),
        }
    }
}

#[inline]
fn sq_dist(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Pairwise costs between the rows of `xb` and `yb`.
pub fn cost_matrix(cost: &CostFn, xb: ArrayView2<f64>, yb: ArrayView2<f64>) -> Result<Array2<f64>> {
    if xb.ncols() != yb.ncols() {
        return Err(OtError::DimensionMismatch {
            expected: xb.ncols(),
            found: yb.ncols(),
        });
    }
    let (n, m, d) = (xb.nrows(), yb.nrows(), xb.ncols());
    let mut c = Array2::zeros((n, m));
    match cost {
        CostFn::SquaredEuclidean | CostFn::Euclidean => {
            let xs = xb.as_standard_layout();
            let ys = yb.as_standard_layout();
            let xs = xs.as_slice().expect("standard layout");
            let ys = ys.as_slice().expect("standard layout");
            let root = matches!(cost, CostFn::Euclidean);
            let out = c.as_slice_mut().expect("fresh array");
            for i in 0..n {
                let x = &xs[i * d..(i + 1) * d];
                let row = &mut out[i * m..(i + 1) * m];
                for (j, cij) in row.iter_mut().enumerate() {
                    let y = &ys[j * d..(j + 1) * d];
                    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    *cij = if root { sq.sqrt() } else { sq };
                }
            }
        }
        CostFn::Custom(f) => {
            for (i, x) in xb.rows().into_iter().enumerate() {
                for (j, y) in yb.rows().into_iter().enumerate() {
                    c[[i, j]] = f(x, y);
                }
            }
        }
    }
    if let CostFn::Custom(_) = cost {
        if let Some(bad) = c.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(OtError::InvalidInput(format!(
                "custom cost produced {bad}; costs must be finite and nonnegative"
            )));
        }
    }
    Ok(c)
}

/// Weighted mean and (biased, weight-normalised) covariance.
pub fn empirical_moments(m: &DiscreteMeasure) -> Result<(Array1<f64>, Array2<f64>)> {
    if m.len() < 2 {
        return Err(OtError::InsufficientData {
            needed: 2,
            found: m.len(),
        });
    }
    let w = &m.weights;
    let mean = m.points.t().dot(w);
    let centered = &m.points - &mean.view().insert_axis(Axis(0));
    let weighted = &centered * &w.view().insert_axis(Axis(1));
    let mut cov = weighted.t().dot(&centered);
    // exact symmetry
    let d = cov.nrows();
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (cov[[i, j]] + cov[[j, i]]);
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    Ok((mean, cov))
}

/// Read a point cloud from CSV: one row per point, optional header.
///
/// With a header, the weight and label columns are the ones named `w` and `y`.
/// Without one, they are the trailing columns in the order `w`, `y`.
pub fn load_csv(path: impl AsRef<Path>, has_weights: bool, has_labels: bool) -> Result<DiscreteMeasure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(csv_error)?;

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_error)?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line() as usize);
        records.push((line, rec));
    }
    if records.is_empty() {
        return Err(OtError::Parse {
            line: 0,
            msg: "empty file".into(),
        });
    }

    let header = records[0].1.iter().any(|c| c.parse::<f64>().is_err());
    let width = records[0].1.len();
    let (w_col, y_col) = if header {
        let names: Vec<&str> = records[0].1.iter().collect();
        let find = |name: &str| names.iter().position(|&c| c == name);
        let w_col = if has_weights {
            Some(find("w").ok_or_else(|| OtError::Parse {
                line: records[0].0,
                msg: "no column named `w`".into(),
            })?)
        } else {
            None
        };
        let y_col = if has_labels {
            Some(find("y").ok_or_else(|| OtError::Parse {
                line: records[0].0,
                msg: "no column named `y`".into(),
            })?)
        } else {
            None
        };
        (w_col, y_col)
    } else {
        let y_col = has_labels.then(|| width - 1);
        let w_col = has_weights.then(|| width - 1 - usize::from(has_labels));
        (w_col, y_col)
    };
    let reserved = usize::from(has_weights) + usize::from(has_labels);
    if width <= reserved {
        return Err(OtError::Parse {
            line: records[0].0,
            msg: "no feature columns".into(),
        });
    }
    let d = width - reserved;

    let body = if header { &records[1..] } else { &records[..] };
    if body.is_empty() {
        return Err(OtError::Parse {
            line: records[0].0,
            msg: "header without data rows".into(),
        });
    }
    let mut points = Array2::zeros((body.len(), d));
    let mut weights = Vec::with_capacity(body.len());
    let mut labels = Vec::with_capacity(body.len());
    for (r, (line, rec)) in body.iter().enumerate() {
        if rec.len() != width {
            return Err(OtError::Parse {
                line: *line,
                msg: format!("expected {width} columns, found {}", rec.len()),
            });
        }
        let mut k = 0;
        for (c, cell) in rec.iter().enumerate() {
            if Some(c) == y_col {
                labels.push(parse_label(cell, *line)?);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| OtError::Parse {
                line: *line,
                msg: format!("non-numeric cell `{cell}`"),
            })?;
            if Some(c) == w_col {
                weights.push(v);
            } else {
                points[[r, k]] = v;
                k += 1;
            }
        }
    }

    let measure = if has_weights {
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || total <= 0.0 {
            return Err(OtError::InvalidInput(
                "weights must be nonnegative with positive sum".into(),
            ));
        }
        DiscreteMeasure::new(points, Array1::from_iter(weights.iter().map(|w| w / total)))?
    } else {
        DiscreteMeasure::uniform(points)?
    };
    if has_labels {
        measure.with_labels(labels)
    } else {
        Ok(measure)
    }
}

fn parse_label(cell: &str, line: usize) -> Result<usize> {
    if let Ok(v) = cell.parse::<usize>() {
        return Ok(v);
    }
    match cell.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 => Ok(v as usize),
        _ => Err(OtError::Parse {
            line,
            msg: format!("invalid label `{cell}`"),
        }),
    }
}

fn csv_error(e: csv::Error) -> OtError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => OtError::Io(io),
        other => OtError::Parse {
            line,
            msg: format!("{other:?}"),
        },
    }
}

/// Write a measure as CSV with header `x0,…,x{d-1},w[,y]`.
pub fn save_csv(m: &DiscreteMeasure, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header: Vec<String> = (0..m.dim()).map(|k| format!("x{k}")).collect();
    header.push("w".into());
    if m.labels.is_some() {
        header.push("y".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for i in 0..m.len() {
        let mut cells: Vec<String> = m.points.row(i).iter().map(|v| v.to_string()).collect();
        cells.push(m.weights[i].to_string());
        if let Some(l) = &m.labels {
            cells.push(l[i].to_string());
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Parameters of the labelled Gaussian-blob generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Translation applied to the target domain after rotation.
    pub shift: Vec<f64>,
    /// Rotation angle (radians) in the plane of the first two coordinates.
    pub rotation: f64,
    /// Distance of the blob centers from the origin.
    pub center_radius: f64,
    /// Isotropic standard deviation of every blob.
    pub spread: f64,
}

impl BlobConfig {
    pub fn new(classes: usize, per_class: usize, dim: usize) -> Self {
        Self {
            classes,
            per_class,
            dim,
            shift: vec![0.0; dim],
            rotation: 0.0,
            center_radius: 4.0,
            spread: 1.0,
        }
    }

    /// Class centers: equally spaced on a circle around the origin (on a
    /// segment when `dim == 1`).
    pub fn centers(&self) -> Array2<f64> {
        let k = self.classes;
        let mut c = Array2::zeros((k, self.dim));
        for i in 0..k {
            if self.dim == 1 {
                c[[i, 0]] = self.center_radius * (2.0 * i as f64 / (k - 1) as f64 - 1.0);
            } else {
                let t = std::f64::consts::TAU * i as f64 / k as f64;
                c[[i, 0]] = self.center_radius * t.cos();
                c[[i, 1]] = self.center_radius * t.sin();
            }
        }
        c
    }

    /// The domain shift: rotation in the first coordinate plane, then translation.
    pub fn transform(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut out = x.to_owned();
        if self.dim >= 2 {
            let (s, c) = self.rotation.sin_cos();
            out[0] = c * x[0] - s * x[1];
            out[1] = s * x[0] + c * x[1];
        }
        out += &ArrayView1::from(&self.shift[..]);
        out
    }
}

/// Labelled source blobs and their rotated + shifted target counterparts.
///
/// Target points are fresh draws from the transformed component laws. Both
/// measures carry labels; pipelines must withhold the target ones.
pub fn make_blobs<R: Rng + ?Sized>(cfg: &BlobConfig, rng: &mut R) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    if cfg.classes < 2 || cfg.per_class < 1 || cfg.dim < 1 {
        return Err(OtError::InvalidInput(
            "blobs need at least 2 classes, 1 point per class and dimension 1".into(),
        ));
    }
    if cfg.shift.len() != cfg.dim {
        return Err(OtError::DimensionMismatch {
            expected: cfg.dim,
            found: cfg.shift.len(),
        });
    }
    if cfg.dim < 2 && cfg.rotation != 0.0 {
        return Err(OtError::InvalidInput("rotation needs dimension >= 2".into()));
    }
    if !(cfg.spread > 0.0) {
        return Err(OtError::InvalidInput("blob spread must be positive".into()));
    }
    let centers = cfg.centers();
    let n = cfg.classes * cfg.per_class;
    let draw = |rng: &mut R, transformed: bool| {
        let mut pts = Array2::zeros((n, cfg.dim));
        let mut labels = Vec::with_capacity(n);
        for k in 0..cfg.classes {
            for r in 0..cfg.per_class {
                let mut x = centers.row(k).to_owned();
                for v in x.iter_mut() {
                    *v += cfg.spread * rng.sample::<f64, _>(StandardNormal);
                }
                let row = k * cfg.per_class + r;
                if transformed {
                    pts.row_mut(row).assign(&cfg.transform(x.view()));
                } else {
                    pts.row_mut(row).assign(&x);
                }
                labels.push(k);
            }
        }
        DiscreteMeasure::uniform(pts).and_then(|m| m.with_labels(labels))
    };
    let source = draw(rng, false)?;
    let target = draw(rng, true)?;
    Ok((source, target))
}

pub(crate) fn check_simplex(w: ArrayView1<f64>, what: &str) -> Result<()> {
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(OtError::InvalidInput(format!("{what} must be finite and nonnegative")));
    }
    let total: f64 = w.sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(OtError::InvalidInput(format!("{what} sum to {total}, not 1")));
    }
    Ok(())
}

pub(crate) fn check_spd(m: ArrayView2<f64>, what: &str) -> Result<()> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(OtError::DimensionMismatch {
            expected: d,
            found: m.ncols(),
        });
    }
    for i in 0..d {
        for j in 0..i {
            let scale = m[[i, j]].abs().max(m[[j, i]].abs()).max(1.0);
            if (m[[i, j]] - m[[j, i]]).abs() > SYMMETRY_TOL * scale {
                return Err(OtError::InvalidInput(format!("{what} is not symmetric")));
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(OtError::InvalidInput(format!("{what} has non-finite entries")));
    }
    let eig = SymmetricEigen::new(to_dmatrix(m));
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(OtError::InvalidInput(format!("{what} is not positive definite")));
    }
    Ok(())
}

pub(crate) fn to_dmatrix(m: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

pub(crate) fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Subset of rows of a point matrix.
pub fn select_rows(points: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), points.ncols()));
    for (k, &r) in rows.iter().enumerate() {
        out.row_mut(k).assign(&points.slice(s![r, ..]));
    }
    out
}
