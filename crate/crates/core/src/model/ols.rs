use nalgebra::{DMatrix, DVector};

use super::{Dataset, FittedModel};
use crate::error::{Error, Result};
use crate::linalg;

/// Relative threshold on `|R_jj|` below which column `j` counts as dependent.
const RANK_TOL: f64 = 1e-10;

/// Least-squares solution via Householder QR, reporting dependent columns.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let p = x.ncols();
    if p == 0 {
        return Ok(DVector::zeros(0));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let dependent: Vec<usize> = (0..p)
        .filter(|&j| !(r[(j, j)].abs() >= RANK_TOL * max_diag) || max_diag == 0.0)
        .collect();
    if !dependent.is_empty() {
        return Err(Error::RankDeficient { columns: dependent });
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient { columns: vec![] })
}

/// Ordinary least squares with energy `ψᵢ(θ) = ½(yᵢ − xᵢᵀθ)²`.
///
/// Scores are `ψ′ᵢ = −(yᵢ − xᵢᵀθ̂)·xᵢ`, the summed Hessian is `XᵀX` and
/// `a_n = √n`.
pub fn fit_ols(data: &Dataset) -> Result<FittedModel> {
    let (n, p) = (data.n(), data.p());
    if n <= p {
        return Err(Error::NeedsScreening { n, p });
    }
    let x = data.x();
    let theta = least_squares(x, data.y())?;
    let resid = data.y() - x * &theta;
    let mut scores = x.clone();
    for (i, mut row) in scores.row_iter_mut().enumerate() {
        row *= -resid[i];
    }
    let hessian = x.transpose() * x;
    let energy = 0.5 * resid.norm_squared();
    FittedModel::new(theta, scores, hessian, (n as f64).sqrt(), energy)
}

/// OLS restricted to `support`, zeros elsewhere.
pub fn refit_ols(data: &Dataset, support: &[usize]) -> Result<DVector<f64>> {
    if support.is_empty() {
        return Ok(DVector::zeros(data.p()));
    }
    let xs = linalg::select_columns(data.x(), support);
    let coef = least_squares(&xs, data.y()).map_err(|e| match e {
        Error::RankDeficient { columns } => Error::RankDeficient {
            columns: columns.into_iter().map(|k| support[k]).collect(),
        },
        other => other,
    })?;
    Ok(linalg::scatter(data.p(), support, &coef))
}
