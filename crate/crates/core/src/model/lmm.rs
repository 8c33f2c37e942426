//! Gaussian linear mixed model `y = Xβ + RU + ε` fitted by maximum likelihood.
//!
//! For group `i` the marginal covariance is `Vᵢ = RᵢΔRᵢᵀ + σ²I`. Writing
//! `Ψ = Δ/σ² = LLᵀ`, both `β` and `σ²` have closed forms given `Ψ`, so the
//! likelihood is maximised over the entries of the lower-triangular `L` only.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::ols::least_squares;
use super::{Dataset, FittedModel};
use crate::error::{Error, Result};
use crate::linalg;

/// Bound on `|L_jk|` during the search.
const PARAM_BOUND: f64 = 1e3;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Default)]
pub struct LmmDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// The final `Δ̂` had a negative eigenvalue (round-off) and was clipped.
    pub psd_projected: bool,
}

/// Fitted variance components, GLS fixed effects and per-group covariances.
#[derive(Debug, Clone)]
pub struct MixedModelFit {
    pub beta_hat: DVector<f64>,
    pub delta_hat: DMatrix<f64>,
    pub sigma2_hat: f64,
    pub marginal_cov_per_group: Vec<DMatrix<f64>>,
    pub diagnostics: LmmDiagnostics,
    groups: Vec<Vec<usize>>,
    chols: Vec<Cholesky<f64, Dyn>>,
    log_dets: Vec<f64>,
}

struct Block {
    x: DMatrix<f64>,
    y: DVector<f64>,
    z: DMatrix<f64>,
}

fn blocks(data: &Dataset, random_design: &[DMatrix<f64>]) -> Result<(Vec<Vec<usize>>, Vec<Block>)> {
    let groups = data
        .groups()
        .ok_or_else(|| Error::InvalidInput("mixed model requires a group structure".into()))?;
    if random_design.len() != groups.len() {
        return Err(Error::dims("random-effect designs", groups.len(), random_design.len()));
    }
    let q = random_design.first().map_or(0, |z| z.ncols());
    let mut out = Vec::with_capacity(groups.len());
    for (g, (rows, z)) in groups.iter().zip(random_design).enumerate() {
        if z.nrows() != rows.len() {
            return Err(Error::InvalidInput(format!(
                "random design of group {g} has {} rows, group has {}",
                z.nrows(),
                rows.len()
            )));
        }
        if z.ncols() != q {
            return Err(Error::dims("random-effect columns", q, z.ncols()));
        }
        out.push(Block {
            x: linalg::select_rows(data.x(), rows),
            y: linalg::select_entries(data.y(), rows),
            z: z.clone(),
        });
    }
    Ok((groups.to_vec(), out))
}

fn lower_from_params(params: &DVector<f64>, q: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(q, q);
    let mut k = 0;
    for i in 0..q {
        for j in 0..=i {
            l[(i, j)] = params[k];
            k += 1;
        }
    }
    l
}

/// Negative profile log-likelihood at `Ψ`, with `β̂(Ψ)` and `σ̂²(Ψ)`.
fn profile(blocks: &[Block], psi: &DMatrix<f64>, p: usize) -> Option<(f64, DVector<f64>, f64)> {
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    let mut c = 0.0;
    let mut log_det = 0.0;
    let mut total = 0usize;
    for blk in blocks {
        let ni = blk.y.len();
        total += ni;
        let w = DMatrix::identity(ni, ni) + &blk.z * psi * blk.z.transpose();
        let chol = w.cholesky()?;
        log_det += 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let wx = chol.solve(&blk.x);
        let wy = chol.solve(&blk.y);
        a += blk.x.transpose() * &wx;
        b += blk.x.transpose() * &wy;
        c += blk.y.dot(&wy);
    }
    let beta = a.cholesky()?.solve(&b);
    let quad = (c - b.dot(&beta)).max(f64::MIN_POSITIVE);
    let n = total as f64;
    let sigma2 = quad / n;
    let nll = 0.5 * (n * (2.0 * PI * sigma2).ln() + n + log_det);
    nll.is_finite().then_some((nll, beta, sigma2))
}

fn numeric_gradient(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let h = 1e-6 * x[i].abs().max(1.0);
        let mut up = x.clone();
        let mut dn = x.clone();
        up[i] += h;
        dn[i] -= h;
        (f(&up) - f(&dn)) / (2.0 * h)
    })
}

/// BFGS with Armijo backtracking on a box `|xᵢ| ≤ PARAM_BOUND`.
fn minimize(f: &dyn Fn(&DVector<f64>) -> f64, x0: DVector<f64>) -> (DVector<f64>, usize, bool) {
    let dim = x0.len();
    let clamp = |v: DVector<f64>| v.map(|t| t.clamp(-PARAM_BOUND, PARAM_BOUND));
    let mut x = clamp(x0);
    let mut fx = f(&x);
    let mut g = numeric_gradient(f, &x);
    let mut h_inv = DMatrix::<f64>::identity(dim, dim);
    for iter in 0..MAX_ITER {
        if g.amax() < 1e-6 * (1.0 + fx.abs()) {
            return (x, iter, true);
        }
        let mut dir = -(&h_inv * &g);
        if dir.dot(&g) >= 0.0 {
            h_inv = DMatrix::identity(dim, dim);
            dir = -g.clone();
        }
        let step_norm = dir.norm();
        if step_norm > 10.0 {
            dir *= 10.0 / step_norm;
        }
        let slope = dir.dot(&g);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            let cand = clamp(&x + &dir * t);
            let fc = f(&cand);
            if fc.is_finite() && fc <= fx + 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            return (x, iter, g.amax() < 1e-4 * (1.0 + fx.abs()));
        };
        let g_new = numeric_gradient(f, &x_new);
        let s = &x_new - &x;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(dim, dim);
            let left = &eye - (&s * yv.transpose()) * rho;
            let right = &eye - (&yv * s.transpose()) * rho;
            h_inv = &left * &h_inv * &right + (&s * s.transpose()) * rho;
        }
        let improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        if improvement.abs() <= 1e-13 * (1.0 + fx.abs()) && s.amax() < 1e-9 {
            return (x, iter + 1, true);
        }
    }
    (x, MAX_ITER, false)
}

/// Maximum-likelihood fit of the variance components followed by GLS for `β`.
///
/// The returned [`FittedModel`] has one score row per group,
/// `ψ′ᵢ = −XᵢᵀVᵢ⁻¹(yᵢ − Xᵢβ̂)`, Hessian `Σᵢ XᵢᵀVᵢ⁻¹Xᵢ` and `a_n = √N`.
pub fn fit_lmm(data: &Dataset, random_design: &[DMatrix<f64>]) -> Result<(MixedModelFit, FittedModel)> {
    let (_, blks) = blocks(data, random_design)?;
    let p = data.p();
    let q = random_design.first().map_or(0, |z| z.ncols());
    let n_var = q * (q + 1) / 2;
    if data.n() <= p + n_var {
        return Err(Error::NeedsScreening {
            n: data.n(),
            p: p + n_var,
        });
    }
    let objective = |params: &DVector<f64>| -> f64 {
        let l = lower_from_params(params, q);
        profile(&blks, &(&l * l.transpose()), p).map_or(f64::INFINITY, |(nll, _, _)| nll)
    };
    let mut x0 = DVector::zeros(n_var);
    let mut k = 0;
    for i in 0..q {
        for j in 0..=i {
            if i == j {
                x0[k] = 1.0;
            }
            k += 1;
        }
    }
    if !objective(&x0).is_finite() {
        // X'W⁻¹X singular at the starting point means X itself is deficient
        least_squares(data.x(), data.y())?;
        return Err(Error::SingularCovariance { group: 0 });
    }
    let (params, iterations, converged) = minimize(&objective, x0);
    let l = lower_from_params(&params, q);
    let psi = &l * l.transpose();
    let (_, _, sigma2) = profile(&blks, &psi, p).ok_or(Error::SingularCovariance { group: 0 })?;
    let (delta, psd_projected) = linalg::nearest_psd(&(psi * sigma2));
    let (mut mixed, fitted) = gls_fit(data, random_design, &delta, sigma2)?;
    mixed.diagnostics = LmmDiagnostics {
        iterations,
        converged,
        psd_projected,
    };
    Ok((mixed, fitted))
}

/// GLS fit of `β` for given variance components `(Δ, σ²)`.
pub fn gls_fit(
    data: &Dataset,
    random_design: &[DMatrix<f64>],
    delta: &DMatrix<f64>,
    sigma2: f64,
) -> Result<(MixedModelFit, FittedModel)> {
    let (groups, blks) = blocks(data, random_design)?;
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidInput("error variance must be positive".into()));
    }
    let p = data.p();
    let mut covs = Vec::with_capacity(blks.len());
    let mut chols = Vec::with_capacity(blks.len());
    let mut log_dets = Vec::with_capacity(blks.len());
    for (g, blk) in blks.iter().enumerate() {
        let ni = blk.y.len();
        let v = &blk.z * delta * blk.z.transpose() + DMatrix::identity(ni, ni) * sigma2;
        let chol = v.clone().cholesky().ok_or(Error::SingularCovariance { group: g })?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::SingularCovariance { group: g });
        }
        covs.push(v);
        chols.push(chol);
        log_dets.push(log_det);
    }
    let mixed = MixedModelFit {
        beta_hat: DVector::zeros(p),
        delta_hat: delta.clone(),
        sigma2_hat: sigma2,
        marginal_cov_per_group: covs,
        diagnostics: LmmDiagnostics {
            converged: true,
            ..Default::default()
        },
        groups,
        chols,
        log_dets,
    };
    let all: Vec<usize> = (0..p).collect();
    let (xw, yw) = mixed.whitened(data, &all);
    let beta = least_squares(&xw, &yw)?;

    let mut scores = DMatrix::zeros(blks.len(), p);
    let mut offset = 0;
    for (g, rows) in mixed.groups.iter().enumerate() {
        let ni = rows.len();
        let xg = xw.rows(offset, ni);
        let rg = yw.rows(offset, ni) - xg * &beta;
        let s = -(xg.transpose() * rg);
        scores.set_row(g, &s.transpose());
        offset += ni;
    }
    let hessian = xw.transpose() * &xw;
    let mixed = MixedModelFit {
        beta_hat: beta.clone(),
        ..mixed
    };
    let energy = mixed.neg_log_likelihood(data, &beta)?;
    let fitted = FittedModel::new(beta, scores, hessian, (data.n() as f64).sqrt(), energy)?;
    Ok((mixed, fitted))
}

impl MixedModelFit {
    /// Stacked `Lᵢ⁻¹Xᵢ[:, cols]` and `Lᵢ⁻¹yᵢ` with `Vᵢ = LᵢLᵢᵀ`, groups in order.
    fn whitened(&self, data: &Dataset, cols: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let n: usize = self.groups.iter().map(Vec::len).sum();
        let mut xw = DMatrix::zeros(n, cols.len());
        let mut yw = DVector::zeros(n);
        let mut offset = 0;
        for (rows, chol) in self.groups.iter().zip(&self.chols) {
            let ni = rows.len();
            let l = chol.l();
            let xg = DMatrix::from_fn(ni, cols.len(), |r, k| data.x()[(rows[r], cols[k])]);
            let yg = linalg::select_entries(data.y(), rows);
            let xs = l.solve_lower_triangular(&xg).expect("cholesky factor is nonsingular");
            let ys = l.solve_lower_triangular(&yg).expect("cholesky factor is nonsingular");
            xw.rows_mut(offset, ni).copy_from(&xs);
            yw.rows_mut(offset, ni).copy_from(&ys);
            offset += ni;
        }
        (xw, yw)
    }

    /// `½ Σᵢ [nᵢ ln 2π + ln|Vᵢ| + rᵢᵀVᵢ⁻¹rᵢ]` at `β = theta`.
    pub fn neg_log_likelihood(&self, data: &Dataset, theta: &DVector<f64>) -> Result<f64> {
        if theta.len() != data.p() {
            return Err(Error::dims("parameter length", data.p(), theta.len()));
        }
        let mut total = 0.0;
        for ((rows, chol), log_det) in self.groups.iter().zip(&self.chols).zip(&self.log_dets) {
            let r = DVector::from_fn(rows.len(), |k, _| {
                let i = rows[k];
                data.y()[i] - data.x().row(i).transpose().dot(theta)
            });
            let quad = r.dot(&chol.solve(&r));
            total += 0.5 * (rows.len() as f64 * (2.0 * PI).ln() + log_det + quad);
        }
        Ok(total)
    }

    /// GLS on the columns in `support` with the covariances frozen.
    pub fn gls_refit(&self, data: &Dataset, support: &[usize]) -> Result<DVector<f64>> {
        if support.is_empty() {
            return Ok(DVector::zeros(data.p()));
        }
        let (xw, yw) = self.whitened(data, support);
        let coef = least_squares(&xw, &yw).map_err(|e| match e {
            Error::RankDeficient { columns } => Error::RankDeficient {
                columns: columns.into_iter().map(|k| support[k]).collect(),
            },
            other => other,
        })?;
        Ok(linalg::scatter(data.p(), support, &coef))
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fit_ols, refit_ols};
    use crate::simbench::{gen_mixed, MixedSimConfig};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn grouped(seed: u64, m: usize, ni: usize, p: usize, tau2: f64) -> (Dataset, Vec<DMatrix<f64>>) {
        let mut rng = crate::rng::stream_rng(seed, 0);
        let n = m * ni;
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let beta = DVector::from_fn(p, |j, _| if j < 2 { 1.0 } else { 0.0 });
        let mut y = &x * beta;
        for g in 0..m {
            let u: f64 = rng.sample::<f64, _>(StandardNormal) * tau2.sqrt();
            for k in 0..ni {
                y[g * ni + k] += u + rng.sample::<f64, _>(StandardNormal);
            }
        }
        let groups = (0..m).map(|g| (g * ni..(g + 1) * ni).collect()).collect();
        let d = Dataset::new(x, y, None).unwrap().with_groups(groups).unwrap();
        let z = vec![DMatrix::from_element(ni, 1, 1.0); m];
        (d, z)
    }

    #[test]
    fn zero_random_effects_reduce_to_ols() {
        let (d, z) = grouped(1, 20, 5, 3, 0.0);
        let (_, gls) = gls_fit(&d, &z, &DMatrix::zeros(1, 1), 1.0).unwrap();
        let ols = fit_ols(&d).unwrap();
        assert!((gls.theta_hat() - ols.theta_hat()).amax() < 1e-6);
    }

    #[test]
    fn ml_fit_is_close_to_ols_without_random_effects() {
        let (d, z) = grouped(2, 40, 5, 3, 0.0);
        let (mixed, fitted) = fit_lmm(&d, &z).unwrap();
        let ols = fit_ols(&d).unwrap();
        assert!(mixed.delta_hat[(0, 0)] < 0.2);
        assert!((fitted.theta_hat() - ols.theta_hat()).amax() < 0.05);
    }

    #[test]
    fn first_order_optimality_and_local_minimality() {
        let (d, z) = grouped(3, 30, 6, 4, 2.0);
        let (mixed, fitted) = fit_lmm(&d, &z).unwrap();
        assert!(fitted.score_sum_norm() <= 1e-8 * (1.0 + fitted.scores().norm()));
        assert!(mixed.sigma2_hat > 0.0);
        assert!(mixed.diagnostics.converged);
        let e0 = mixed.neg_log_likelihood(&d, fitted.theta_hat()).unwrap();
        assert!((e0 - fitted.energy_at_fit()).abs() < 1e-9);
        let mut rng = crate::rng::stream_rng(3, 9);
        for _ in 0..100 {
            let mut u = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
            u *= rng.random_range(0.0..1.0) / u.norm();
            let e = mixed.neg_log_likelihood(&d, &(fitted.theta_hat() + u)).unwrap();
            assert!(e >= e0);
        }
    }

    #[test]
    fn likelihood_at_optimum_beats_truth_single_group() {
        let (d, z) = grouped(4, 1, 40, 2, 1.5);
        // a single group cannot identify the intercept variance well, but the
        // maximiser must still dominate the truth on this sample
        let (mixed, fitted) = fit_lmm(&d, &z).unwrap();
        let best = fitted.energy_at_fit();
        let truth_beta = DVector::from_vec(vec![1.0, 1.0]);
        let (truth, _) = gls_fit(&d, &z, &DMatrix::from_element(1, 1, 1.5), 1.0).unwrap();
        let at_truth = truth.neg_log_likelihood(&d, &truth_beta).unwrap();
        assert!(best <= at_truth + 1e-9, "{best} vs {at_truth}");
        assert!(mixed.delta_hat[(0, 0)] >= 0.0);
    }

    #[test]
    fn refit_matches_subset_gls() {
        let (d, z) = grouped(5, 30, 5, 4, 1.0);
        let (mixed, _) = fit_lmm(&d, &z).unwrap();
        let r = mixed.gls_refit(&d, &[0, 2]).unwrap();
        assert_eq!(r[1], 0.0);
        let sub = d.select_features(&[0, 2]);
        let (_, direct) = gls_fit(&sub, &z, &mixed.delta_hat, mixed.sigma2_hat).unwrap();
        assert!((r[0] - direct.theta_hat()[0]).abs() < 1e-10);
        assert!((r[2] - direct.theta_hat()[1]).abs() < 1e-10);
        assert_eq!(mixed.gls_refit(&d, &[]).unwrap(), DVector::zeros(4));
        // with no random effects the refit equals the OLS refit
        let (zero, _) = gls_fit(&d, &z, &DMatrix::zeros(1, 1), 1.0).unwrap();
        let a = zero.gls_refit(&d, &[1, 3]).unwrap();
        let b = refit_ols(&d, &[1, 3]).unwrap();
        assert!((a - b).amax() < 1e-10);
    }

    #[test]
    fn requires_groups() {
        let x = DMatrix::from_element(10, 1, 1.0);
        let d = Dataset::new(x, DVector::zeros(10), None).unwrap();
        assert!(matches!(fit_lmm(&d, &[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn setting_two_fixed_effects_are_unbiased() {
        // mean of 100 replicate estimates within 3 Monte-Carlo SE of the truth
        let cfg = MixedSimConfig::setting2();
        let reps = 100;
        let p = cfg.beta0.len();
        let mut sum = DVector::<f64>::zeros(p);
        let mut sum_sq = DVector::<f64>::zeros(p);
        for r in 0..reps {
            let sim = gen_mixed(&cfg, 1000 + r as u64);
            let (_, fitted) = fit_lmm(&sim.data, &sim.random_design).unwrap();
            sum += fitted.theta_hat();
            sum_sq += fitted.theta_hat().component_mul(fitted.theta_hat());
        }
        let k = reps as f64;
        for j in 0..p {
            let mean = sum[j] / k;
            let var = (sum_sq[j] / k - mean * mean) * k / (k - 1.0);
            let se = (var / k).sqrt();
            assert!((mean - cfg.beta0[j]).abs() <= 3.0 * se, "coef {j}: {mean} ± {se}");
        }
    }
}
