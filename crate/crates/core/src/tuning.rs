//! `τₙ` selection by the generalized bootstrap information criterion
//!
//! ```text
//! GBIC(τₙ) = Σᵢ ψᵢ(θ̂(Ŝ, τₙ)) + (τₙ / 2) · |supp θ̂(Ŝ, τₙ)|
//! ```
//!
//! where `θ̂(Ŝ, τₙ)` is the refit on the set selected at `τₙ`.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::DepthKind;
use crate::error::{Error, Result};
use crate::evalue::{select, EValueReport};
use crate::gbs::GbsConfig;
use crate::model::{Dataset, EnergyModel, FullFit};
use crate::rng;

/// Coordinates with `|θⱼ| ≤ SUPPORT_TOL` do not count towards the support.
pub const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct GbicValue {
    pub value: f64,
    pub energy: f64,
    pub support_size: usize,
    pub refit: DVector<f64>,
}

/// Refit on `selected`, then energy plus `(τₙ/2)·|support|`. An empty
/// selection scores the all-zero vector with no penalty.
pub fn gbic(data: &Dataset, selected: &[usize], tau_n: f64, model: &EnergyModel) -> Result<GbicValue> {
    if let Some(&j) = selected.iter().find(|&&j| j >= data.p()) {
        return Err(Error::InvalidInput(format!("selected index {j} out of range")));
    }
    let refit = model.refit(data, selected)?;
    let energy = model.energy(data, &refit)?;
    let support_size = refit.iter().filter(|v| v.abs() > SUPPORT_TOL).count();
    Ok(GbicValue {
        value: gbic_value(energy, support_size, tau_n),
        energy,
        support_size,
        refit,
    })
}

pub fn gbic_value(energy: f64, support_size: usize, tau_n: f64) -> f64 {
    energy + 0.5 * tau_n * support_size as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPoint {
    pub tau_n: f64,
    pub seed: u64,
    pub selected: Vec<usize>,
    pub refit: Vec<f64>,
    pub gbic: f64,
    pub report: EValueReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningResult {
    pub delta: f64,
    pub grid: Vec<GridPoint>,
    /// Index into `grid` of the minimal GBIC.
    pub best: usize,
}

impl TuningResult {
    pub fn best_point(&self) -> &GridPoint {
        &self.grid[self.best]
    }

    pub fn best_tau(&self) -> f64 {
        self.best_point().tau_n
    }

    pub fn best_selection(&self) -> &[usize] {
        &self.best_point().selected
    }
}

/// Index of the smallest GBIC; ties go to the smaller `τₙ`.
fn argmin(grid: &[GridPoint]) -> usize {
    let mut best = 0;
    for (k, g) in grid.iter().enumerate().skip(1) {
        let b = &grid[best];
        if g.gbic < b.gbic || (g.gbic == b.gbic && g.tau_n < b.tau_n) {
            best = k;
        }
    }
    best
}

/// Seed used for grid point `k` of a tuning run with master seed `seed`.
pub fn grid_seed(seed: u64, k: usize) -> u64 {
    rng::derive_indexed(seed, rng::label::TAU_GRID, k as u64)
}

/// Run the selection at every `τₙ` in `tau_grid` (fresh clouds per grid
/// point) and keep the set with the smallest GBIC.
pub fn tune_select(
    data: &Dataset,
    fit: &FullFit,
    tau_grid: &[f64],
    delta: f64,
    template: &GbsConfig,
    depth: &DepthKind,
) -> Result<TuningResult> {
    let mut out = tune_select_deltas(data, fit, tau_grid, &[delta], template, depth)?;
    Ok(out.remove(0))
}

/// [`tune_select`] for several threshold shifts sharing the same clouds.
pub fn tune_select_deltas(
    data: &Dataset,
    fit: &FullFit,
    tau_grid: &[f64],
    deltas: &[f64],
    template: &GbsConfig,
    depth: &DepthKind,
) -> Result<Vec<TuningResult>> {
    if tau_grid.is_empty() {
        return Err(Error::InvalidInput("tau grid is empty".into()));
    }
    if deltas.is_empty() {
        return Err(Error::InvalidInput("delta grid is empty".into()));
    }
    if let Some(t) = tau_grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "tau grid entries must be positive, got {t}"
        )));
    }
    let base: Vec<(u64, EValueReport)> = tau_grid
        .par_iter()
        .enumerate()
        .map(|(k, &tau_n)| {
            let cfg = GbsConfig {
                tau_n,
                seed: grid_seed(template.seed, k),
                ..template.clone()
            };
            select(&fit.fitted, &cfg, deltas[0], depth).map(|r| (cfg.seed, r))
        })
        .collect::<Result<_>>()?;

    deltas
        .iter()
        .map(|&delta| {
            let grid = base
                .par_iter()
                .map(|(seed, report)| {
                    let report = report.with_delta(delta);
                    let g = gbic(data, &report.selected, report.tau_n, &fit.energy)?;
                    Ok(GridPoint {
                        tau_n: report.tau_n,
                        seed: *seed,
                        selected: report.selected.clone(),
                        refit: g.refit.iter().copied().collect(),
                        gbic: g.value,
                        report,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let best = argmin(&grid);
            Ok(TuningResult { delta, grid, best })
        })
        .collect()
}

/// `{0.2, 0.6, 1, 1.4, 1.8}`.
pub const LINEAR_GRID: [f64; 5] = [0.2, 0.6, 1.0, 1.4, 1.8];

/// `ln(n)·√ln(p)`, the multiplier applied to [`LINEAR_GRID`].
pub fn logn_sqrtlogp(n: usize, p: usize) -> f64 {
    (n as f64).ln() * (p.max(2) as f64).ln().sqrt()
}

/// `{1, 1.2, …, 5}`.
pub fn mixed_grid() -> Vec<f64> {
    (0..=20).map(|k| (5 + k) as f64 / 5.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fit, Family};
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ols_data(seed: u64, n: usize, beta: &[f64]) -> Dataset {
        let p = beta.len();
        let mut rng = rng::stream_rng(seed, 0);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y =
            &x * DVector::from_column_slice(beta) + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        Dataset::new(x, y, None).unwrap()
    }

    fn template(seed: u64) -> GbsConfig {
        GbsConfig {
            r: 300,
            r1: 300,
            ..GbsConfig::new(1.0, seed)
        }
    }

    #[test]
    fn formula_arithmetic() {
        assert_eq!(gbic_value(10.0, 3, 2.0), 13.0);
    }

    #[test]
    fn empty_selection_is_null_energy() {
        let d = ols_data(1, 50, &[1.0, 0.0]);
        let g = gbic(&d, &[], 3.0, &EnergyModel::Ols).unwrap();
        let null = EnergyModel::Ols.energy(&d, &DVector::zeros(2)).unwrap();
        assert_eq!(g.value, null);
        assert_eq!(g.support_size, 0);
    }

    #[test]
    fn full_support_matches_unrestricted_fit() {
        let d = ols_data(2, 80, &[1.0, -0.5, 0.3, 0.0]);
        let full = fit(&d, &Family::Ols).unwrap();
        let tau = 3.0;
        let g = gbic(&d, &[0, 1, 2, 3], tau, &EnergyModel::Ols).unwrap();
        let bound = full.fitted.energy_at_fit() + 0.5 * tau * 4.0;
        assert!(g.value <= bound + 1e-9);
        // the refit has no exact zeros, so the bound is attained
        assert_eq!(g.support_size, 4);
        assert!((g.value - bound).abs() < 1e-9);
    }

    #[test]
    fn gbic_nondecreasing_in_tau_for_fixed_set() {
        let d = ols_data(3, 60, &[1.0, 0.0, 1.0]);
        let mut last = f64::NEG_INFINITY;
        for tau in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let g = gbic(&d, &[0, 2], tau, &EnergyModel::Ols).unwrap().value;
            assert!(g >= last);
            last = g;
        }
    }

    #[test]
    fn out_of_range_selection() {
        let d = ols_data(4, 30, &[1.0]);
        assert!(gbic(&d, &[3], 1.0, &EnergyModel::Ols).is_err());
    }

    #[test]
    fn single_grid_point() {
        let d = ols_data(5, 200, &[2.0, 0.0, 1.0]);
        let f = fit(&d, &Family::Ols).unwrap();
        let t = tune_select(&d, &f, &[4.2], 0.0, &template(1), &DepthKind::Mahalanobis).unwrap();
        assert_eq!(t.best_tau(), 4.2);
        assert_eq!(t.grid.len(), 1);
    }

    #[test]
    fn argmin_prefers_smaller_tau_on_ties() {
        let d = ols_data(6, 200, &[2.0, 0.0, 1.0]);
        let f = fit(&d, &Family::Ols).unwrap();
        let mut t = tune_select(&d, &f, &[3.0, 2.0], 0.0, &template(2), &DepthKind::Mahalanobis).unwrap();
        for g in &mut t.grid {
            g.gbic = 1.0;
        }
        assert_eq!(t.grid[argmin(&t.grid)].tau_n, 2.0);
    }

    #[test]
    fn tuning_is_deterministic() {
        let d = ols_data(7, 300, &[1.0, 0.0, 0.0, 1.0, 0.5]);
        let f = fit(&d, &Family::Ols).unwrap();
        let grid = [2.0, 4.0, 6.0];
        let a = tune_select(&d, &f, &grid, 0.0, &template(3), &DepthKind::Mahalanobis).unwrap();
        let b = tune_select(&d, &f, &grid, 0.0, &template(3), &DepthKind::Mahalanobis).unwrap();
        assert_eq!(a.best, b.best);
        for (x, y) in a.grid.iter().zip(&b.grid) {
            assert_eq!(x.report, y.report);
            assert_eq!(x.gbic, y.gbic);
        }
        let min = a.grid.iter().map(|g| g.gbic).fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_point().gbic, min);
    }

    #[test]
    fn delta_sweep_shares_clouds() {
        let d = ols_data(8, 300, &[1.0, 0.0, 0.0, 1.0]);
        let f = fit(&d, &Family::Ols).unwrap();
        let sweep =
            tune_select_deltas(&d, &f, &[3.0, 5.0], &[0.0, 0.1], &template(4), &DepthKind::Mahalanobis).unwrap();
        let single = tune_select(&d, &f, &[3.0, 5.0], 0.1, &template(4), &DepthKind::Mahalanobis).unwrap();
        assert_eq!(sweep[1].best, single.best);
        assert_eq!(sweep[1].grid[0].report, single.grid[0].report);
    }

    #[test]
    fn rejects_bad_grids() {
        let d = ols_data(9, 100, &[1.0]);
        let f = fit(&d, &Family::Ols).unwrap();
        assert!(tune_select(&d, &f, &[], 0.0, &template(1), &DepthKind::Mahalanobis).is_err());
        assert!(tune_select(&d, &f, &[1.0, -2.0], 0.0, &template(1), &DepthKind::Mahalanobis).is_err());
    }

    #[test]
    fn grids() {
        let g = mixed_grid();
        assert_eq!(g.len(), 21);
        assert!((g[20] - 5.0).abs() < 1e-12);
        assert!((logn_sqrtlogp(500, 100) - 500f64.ln() * 100f64.ln().sqrt()).abs() < 1e-12);
    }
}
