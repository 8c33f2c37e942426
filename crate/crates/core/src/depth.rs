//! Data depth against an empirical point cloud.
//!
//! Both depths map into `(0, 1]`. Mahalanobis depth `1/(1 + d²)` is affine
//! invariant exactly; projection depth `1/(1 + O)` uses the
//! median/MAD outlyingness `O` maximised over random unit directions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Relative eigenvalue floor that triggers the ridge.
const RIDGE_TRIGGER: f64 = 1e-10;
/// Relative eigenvalue the ridge lifts the spectrum to.
const RIDGE_TARGET: f64 = 1e-8;
const MAD_FLOOR: f64 = 1e-12;

pub const DEFAULT_N_DIRS: usize = 500;

/// Moments of a cloud of `R` points in `ℝ^p`, with the Cholesky factor of the
/// (possibly ridged) covariance.
#[derive(Debug, Clone)]
pub struct CloudStats {
    points: DMatrix<f64>,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: DMatrix<f64>,
    ridge: f64,
}

impl CloudStats {
    /// `points` holds one point per row; needs `R ≥ p + 1`.
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        let (r, p) = points.shape();
        if p == 0 {
            return Err(Error::DegenerateCloud("zero-dimensional points".into()));
        }
        if r <= p {
            return Err(Error::DegenerateCloud(format!("{r} points cannot span dimension {p}")));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateCloud("non-finite point".into()));
        }
        let mean = points.row_mean().transpose();
        let mut centered = points.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let mut covariance = centered.transpose() * &centered / (r as f64 - 1.0);
        covariance = (&covariance + covariance.transpose()) * 0.5;

        let scale = covariance.trace() / p as f64;
        // an all-identical cloud has no scale of its own
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let lambda_min = SymmetricEigen::new(covariance.clone()).eigenvalues.min();
        let ridge = if lambda_min < RIDGE_TRIGGER * scale {
            (RIDGE_TARGET * scale - lambda_min).max(0.0)
        } else {
            0.0
        };
        for j in 0..p {
            covariance[(j, j)] += ridge;
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::DegenerateCloud("covariance is not positive definite".into()))?
            .unpack();
        Ok(Self {
            points,
            mean,
            covariance,
            chol,
            ridge,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Lower-triangular `L` with `LLᵀ = covariance`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Ridge added to the diagonal (0 when none was needed).
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// `L⁻¹(x − μ)`.
    pub fn whiten(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chol
            .solve_lower_triangular(&(x - &self.mean))
            .expect("cholesky diagonal is positive")
    }

    /// `(x − μ)ᵀΣ⁻¹(x − μ)`.
    pub fn squared_distance(&self, x: &DVector<f64>) -> f64 {
        self.whiten(x).norm_squared()
    }

    /// Diagonal of `Σ⁻¹`.
    pub fn precision_diagonal(&self) -> DVector<f64> {
        let p = self.dim();
        let l_inv = self
            .chol
            .solve_lower_triangular(&DMatrix::identity(p, p))
            .expect("cholesky diagonal is positive");
        // (Σ⁻¹)_jj = ‖L⁻¹ e_j‖²
        DVector::from_fn(p, |j, _| l_inv.column(j).norm_squared())
    }

    /// `Σ⁻¹(x − μ)` and `‖L⁻¹(x − μ)‖²` in one pass.
    pub(crate) fn precision_times_centered(&self, x: &DVector<f64>) -> (DVector<f64>, f64) {
        let w = self.whiten(x);
        let d2 = w.norm_squared();
        let u = self
            .chol
            .transpose()
            .solve_upper_triangular(&w)
            .expect("cholesky diagonal is positive");
        (u, d2)
    }
}

/// `1 / (1 + (x − μ)ᵀΣ⁻¹(x − μ))`.
pub fn mahalanobis_depth(x: &DVector<f64>, cloud: &CloudStats) -> f64 {
    1.0 / (1.0 + cloud.squared_distance(x))
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    median(values)
}

#[derive(Debug, Clone)]
struct Direction {
    u: DVector<f64>,
    median: f64,
    mad: f64,
}

/// Projection depth prepared against one cloud: per-direction medians and
/// MADs of the projected points.
#[derive(Debug, Clone)]
pub struct ProjectionDepth {
    directions: Vec<Direction>,
}

impl ProjectionDepth {
    /// Directions are uniform on the sphere, drawn from `seed`. Directions
    /// along which every projection coincides are skipped.
    pub fn new(cloud: &CloudStats, n_dirs: usize, seed: u64) -> Result<Self> {
        let mut rng = rng::stream_rng(seed, rng::label::DIRECTIONS);
        let dirs = (0..n_dirs).map(|_| loop {
            let u = DVector::from_fn(cloud.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = u.norm();
            if norm > 0.0 {
                break u / norm;
            }
        });
        Self::with_directions(cloud, dirs)
    }

    /// Projection depth over an explicit set of unit directions.
    pub fn with_directions(cloud: &CloudStats, dirs: impl IntoIterator<Item = DVector<f64>>) -> Result<Self> {
        let points = cloud.points();
        let mut directions = Vec::new();
        let mut proj = vec![0.0; points.nrows()];
        for u in dirs {
            if u.len() != cloud.dim() {
                return Err(Error::dims("direction length", cloud.dim(), u.len()));
            }
            for (i, row) in points.row_iter().enumerate() {
                proj[i] = row.transpose().dot(&u);
            }
            let med = median_of(&mut proj);
            let mut dev: Vec<f64> = proj.iter().map(|v| (v - med).abs()).collect();
            let mad = median_of(&mut dev);
            let spread = proj.last().unwrap() - proj.first().unwrap();
            if spread <= 0.0 {
                continue;
            }
            directions.push(Direction {
                u,
                median: med,
                mad: mad.max(MAD_FLOOR),
            });
        }
        if directions.is_empty() {
            return Err(Error::DegenerateCloud("every projection direction is constant".into()));
        }
        Ok(Self { directions })
    }

    pub fn n_directions(&self) -> usize {
        self.directions.len()
    }

    /// `max_u |uᵀx − med(uᵀX)| / MAD(uᵀX)`.
    pub fn outlyingness(&self, x: &DVector<f64>) -> f64 {
        self.directions
            .iter()
            .map(|d| (d.u.dot(x) - d.median).abs() / d.mad)
            .fold(0.0, f64::max)
    }

    pub fn depth(&self, x: &DVector<f64>) -> f64 {
        1.0 / (1.0 + self.outlyingness(x))
    }
}

/// One-shot projection depth; prefer [`ProjectionDepth`] for many queries.
pub fn projection_depth(x: &DVector<f64>, cloud: &CloudStats, n_dirs: usize, seed: u64) -> Result<f64> {
    if n_dirs == 0 {
        return Err(Error::InvalidInput(
            "projection depth needs at least one direction".into(),
        ));
    }
    if x.len() != cloud.dim() {
        return Err(Error::dims("point dimension", cloud.dim(), x.len()));
    }
    Ok(ProjectionDepth::new(cloud, n_dirs, seed)?.depth(x))
}

/// Which depth function scores the e-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DepthKind {
    #[default]
    Mahalanobis,
    Projection {
        n_dirs: usize,
    },
}

impl DepthKind {
    /// Bind the depth to a reference cloud.
    pub fn prepare<'a>(&self, cloud: &'a CloudStats, seed: u64) -> Result<PreparedDepth<'a>> {
        match *self {
            DepthKind::Mahalanobis => Ok(PreparedDepth::Mahalanobis(cloud)),
            DepthKind::Projection { n_dirs } => {
                if n_dirs == 0 {
                    return Err(Error::InvalidInput(
                        "projection depth needs at least one direction".into(),
                    ));
                }
                Ok(PreparedDepth::Projection(ProjectionDepth::new(cloud, n_dirs, seed)?))
            }
        }
    }
}

/// A depth function bound to its reference cloud.
#[derive(Debug, Clone)]
pub enum PreparedDepth<'a> {
    Mahalanobis(&'a CloudStats),
    Projection(ProjectionDepth),
}

impl PreparedDepth<'_> {
    pub fn depth(&self, x: &DVector<f64>) -> f64 {
        match self {
            PreparedDepth::Mahalanobis(cloud) => mahalanobis_depth(x, cloud),
            PreparedDepth::Projection(pd) => pd.depth(x),
        }
    }
}
