//! Datasets, candidate models and the two supported model families.
//!
//! A candidate model is a pair `(S, C)`: the estimable index set `S` and known
//! constants `C` at every index outside `S`. Its parameter estimate is the
//! full-model estimate with the constrained coordinates overwritten
//! ([`plugin_estimate`]).

mod lmm;
mod ols;

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub use lmm::{fit_lmm, gls_fit, LmmDiagnostics, MixedModelFit};
pub use ols::{fit_ols, refit_ols};

/// Response, features and an optional partition of the rows into groups.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    groups: Option<Vec<Vec<usize>>>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, feature_names: Option<Vec<String>>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("dataset has no observations".into()));
        }
        if y.len() != n {
            return Err(Error::dims("response length", n, y.len()));
        }
        if let Some((idx, _)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (row, col) = (idx % n, idx / n);
            return Err(Error::InvalidInput(format!(
                "non-finite feature value at row {row}, column {col}"
            )));
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite response at row {row}")));
        }
        let feature_names = match feature_names {
            Some(names) if names.len() != x.ncols() => {
                return Err(Error::dims("feature names", x.ncols(), names.len()))
            }
            Some(names) => names,
            None => (1..=x.ncols()).map(|j| format!("x{j}")).collect(),
        };
        Ok(Self {
            x,
            y,
            groups: None,
            feature_names,
        })
    }

    /// Attach a partition of `0..n` into nonempty groups.
    pub fn with_groups(mut self, groups: Vec<Vec<usize>>) -> Result<Self> {
        let n = self.n();
        let mut seen = vec![false; n];
        for (g, rows) in groups.iter().enumerate() {
            if rows.is_empty() {
                return Err(Error::InvalidInput(format!("group {g} is empty")));
            }
            for &i in rows {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidInput(format!(
                        "groups do not partition the rows (row {i} in group {g})"
                    )));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!("row {i} belongs to no group")));
        }
        self.groups = Some(groups);
        Ok(self)
    }

    /// Groups from per-row integer labels, in order of first appearance.
    pub fn groups_from_labels(labels: &[i64]) -> Vec<Vec<usize>> {
        let mut order: Vec<i64> = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, &label) in labels.iter().enumerate() {
            match order.iter().position(|&l| l == label) {
                Some(g) => groups[g].push(i),
                None => {
                    order.push(label);
                    groups.push(vec![i]);
                }
            }
        }
        groups
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn groups(&self) -> Option<&[Vec<usize>]> {
        self.groups.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Restriction to the feature columns `cols` (rows and groups kept).
    pub fn select_features(&self, cols: &[usize]) -> Dataset {
        Dataset {
            x: linalg::select_columns(&self.x, cols),
            y: self.y.clone(),
            groups: self.groups.clone(),
            feature_names: cols.iter().map(|&j| self.feature_names[j].clone()).collect(),
        }
    }
}

/// A candidate model `(S, C)`: `None` marks an estimable coordinate, `Some(c)`
/// a coordinate fixed at the known constant `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    slots: Vec<Option<f64>>,
}

impl ModelSpec {
    /// Every coordinate estimable.
    pub fn full(p: usize) -> Self {
        Self { slots: vec![None; p] }
    }

    /// Member of the zero-constrained class: `support` estimable, the rest 0.
    pub fn zero_constrained(p: usize, support: &[usize]) -> Result<Self> {
        let mut slots = vec![Some(0.0); p];
        for &j in support {
            if j >= p {
                return Err(Error::InvalidInput(format!("index {j} out of range for p' = {p}")));
            }
            slots[j] = None;
        }
        Ok(Self { slots })
    }

    /// The full model with coordinate `j` fixed at 0.
    pub fn drop_one(p: usize, j: usize) -> Result<Self> {
        let mut spec = Self::full(p);
        match spec.slots.get_mut(j) {
            Some(slot) => *slot = Some(0.0),
            None => return Err(Error::InvalidInput(format!("index {j} out of range for p' = {p}"))),
        }
        Ok(spec)
    }

    /// General `(S, C)`; `constants` are listed in increasing index order of
    /// the complement of `support`.
    pub fn new(p: usize, support: &[usize], constants: &[f64]) -> Result<Self> {
        let support: BTreeSet<usize> = support.iter().copied().collect();
        if support.iter().any(|&j| j >= p) {
            return Err(Error::InvalidInput(format!("support index out of range for p' = {p}")));
        }
        if constants.len() != p - support.len() {
            return Err(Error::dims("model constants", p - support.len(), constants.len()));
        }
        let mut rest = constants.iter();
        let slots = (0..p)
            .map(|j| {
                if support.contains(&j) {
                    None
                } else {
                    rest.next().copied()
                }
            })
            .collect();
        Ok(Self { slots })
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }

    /// Estimable indices, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.slots[j].is_none()).collect()
    }

    /// `(index, constant)` for every constrained coordinate.
    pub fn constants(&self) -> Vec<(usize, f64)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(j, s)| s.map(|c| (j, c)))
            .collect()
    }

    pub fn is_zero_constrained(&self) -> bool {
        self.slots.iter().all(|s| s.is_none_or(|c| c == 0.0))
    }

    /// Adequate: every known constant equals the true parameter.
    pub fn is_adequate(&self, theta0: &DVector<f64>) -> bool {
        self.constants().iter().all(|&(j, c)| c == theta0[j])
    }

    /// `self ≺ other`: strictly smaller estimable set, and every constant of
    /// `other` is also a constant of `self` with the same value.
    pub fn is_nested_in(&self, other: &ModelSpec) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let (s1, s2) = (self.support(), other.support());
        let strict_subset = s1.len() < s2.len() && s1.iter().all(|j| s2.contains(j));
        strict_subset && other.constants().iter().all(|&(j, c)| self.slots[j] == Some(c))
    }
}

/// Overwrite the constrained coordinates of `theta_full` with the model's
/// constants.
pub fn plugin_estimate(theta_full: &DVector<f64>, spec: &ModelSpec) -> DVector<f64> {
    debug_assert_eq!(theta_full.len(), spec.dim());
    let mut out = theta_full.clone();
    for (j, slot) in spec.slots.iter().enumerate() {
        if let Some(c) = slot {
            out[j] = *c;
        }
    }
    out
}

/// Full-model estimate together with the per-unit score vectors and the
/// summed Hessian of the energy at the estimate.
///
/// A "unit" is one observation for OLS and one group for the mixed model;
/// bootstrap weights are drawn per unit.
#[derive(Debug, Clone)]
pub struct FittedModel {
    theta_hat: DVector<f64>,
    scores: DMatrix<f64>,
    hessian: DMatrix<f64>,
    a_n: f64,
    energy_at_fit: f64,
    hessian_inv_sqrt: DMatrix<f64>,
}

impl FittedModel {
    pub fn new(
        theta_hat: DVector<f64>,
        scores: DMatrix<f64>,
        hessian: DMatrix<f64>,
        a_n: f64,
        energy_at_fit: f64,
    ) -> Result<Self> {
        let p = theta_hat.len();
        if scores.ncols() != p {
            return Err(Error::dims("score columns", p, scores.ncols()));
        }
        if hessian.nrows() != p || hessian.ncols() != p {
            return Err(Error::dims("hessian size", p, hessian.nrows()));
        }
        if !(a_n > 0.0) {
            return Err(Error::InvalidInput("convergence rate a_n must be positive".into()));
        }
        let hessian = linalg::symmetrize(&hessian);
        let hessian_inv_sqrt = linalg::inverse_sqrt_spd(&hessian)?;
        Ok(Self {
            theta_hat,
            scores,
            hessian,
            a_n,
            energy_at_fit,
            hessian_inv_sqrt,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    /// Number of resampling units (rows of `scores`).
    pub fn n_units(&self) -> usize {
        self.scores.nrows()
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn a_n(&self) -> f64 {
        self.a_n
    }

    pub fn energy_at_fit(&self) -> f64 {
        self.energy_at_fit
    }

    /// Symmetric `H^{-1/2}`, computed once at construction.
    pub fn hessian_inv_sqrt(&self) -> &DMatrix<f64> {
        &self.hessian_inv_sqrt
    }

    pub fn hessian_inverse(&self) -> DMatrix<f64> {
        &self.hessian_inv_sqrt * &self.hessian_inv_sqrt
    }

    /// `‖Σᵢ ψ′ᵢ(θ̂)‖`, zero at an exact minimizer.
    pub fn score_sum_norm(&self) -> f64 {
        self.scores.row_sum().norm()
    }
}

/// Model family plus whatever extra design it needs.
#[derive(Debug, Clone)]
pub enum Family {
    Ols,
    /// Gaussian linear mixed model; one random-effects design per group, in
    /// the dataset's group order, rows in the group's row order.
    Lmm {
        random_design: Vec<DMatrix<f64>>,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Ols => "ols",
            Family::Lmm { .. } => "lmm",
        }
    }
}

/// Energy `Σᵢ ψᵢ(θ)` of a fitted family, with any nuisance parameters frozen.
#[derive(Debug, Clone)]
pub enum EnergyModel {
    Ols,
    Lmm(MixedModelFit),
}

impl EnergyModel {
    /// OLS: `½ Σ (yᵢ − xᵢᵀθ)²`. LMM: negative marginal log-likelihood with the
    /// variance components frozen at their fitted values.
    pub fn energy(&self, data: &Dataset, theta: &DVector<f64>) -> Result<f64> {
        if theta.len() != data.p() {
            return Err(Error::dims("parameter length", data.p(), theta.len()));
        }
        match self {
            EnergyModel::Ols => {
                let resid = data.y() - data.x() * theta;
                Ok(0.5 * resid.norm_squared())
            }
            EnergyModel::Lmm(fit) => fit.neg_log_likelihood(data, theta),
        }
    }

    /// Unrestricted re-estimation on `support`; other coordinates are 0.
    pub fn refit(&self, data: &Dataset, support: &[usize]) -> Result<DVector<f64>> {
        match self {
            EnergyModel::Ols => refit_ols(data, support),
            EnergyModel::Lmm(fit) => fit.gls_refit(data, support),
        }
    }
}

/// Energy of `theta` under a fitted family.
pub fn energy(data: &Dataset, theta: &DVector<f64>, model: &EnergyModel) -> Result<f64> {
    model.energy(data, theta)
}

/// Full-model fit plus the energy needed for GBIC refits.
#[derive(Debug, Clone)]
pub struct FullFit {
    pub fitted: FittedModel,
    pub energy: EnergyModel,
}

impl FullFit {
    pub fn mixed(&self) -> Option<&MixedModelFit> {
        match &self.energy {
            EnergyModel::Lmm(m) => Some(m),
            EnergyModel::Ols => None,
        }
    }
}

/// Fit the full model of `family` to `data`.
pub fn fit(data: &Dataset, family: &Family) -> Result<FullFit> {
    match family {
        Family::Ols => Ok(FullFit {
            fitted: fit_ols(data)?,
            energy: EnergyModel::Ols,
        }),
        Family::Lmm { random_design } => {
            let (mixed, fitted) = fit_lmm(data, random_design)?;
            Ok(FullFit {
                fitted,
                energy: EnergyModel::Lmm(mixed),
            })
        }
    }
}
