//! e-values and the one-pass best-subset selection.
//!
//! The e-value of a candidate model is the mean depth, over the evaluation
//! cloud `T₁`, of the model's plug-in resamples with respect to the reference
//! cloud `T`. Feature `j` is selected when zeroing it pulls the e-value below
//! `(1 − δ)` times the full-model e-value, so a larger shift keeps fewer features.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::{DepthKind, PreparedDepth};
use crate::error::{Error, Result};
use crate::gbs::{make_clouds, BootstrapCloud, GbsConfig};
use crate::model::{plugin_estimate, FittedModel, ModelSpec};

/// Largest `p'` accepted by [`exhaustive_evalue_scan`].
pub const EXHAUSTIVE_MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EValueReport {
    pub tau_n: f64,
    pub delta: f64,
    pub full_evalue: f64,
    /// Entry `j` is the e-value of the full model with coordinate `j` zeroed.
    pub dropone_evalues: Vec<f64>,
    /// Selected coordinates, ascending.
    pub selected: Vec<usize>,
}

impl EValueReport {
    pub fn new(tau_n: f64, delta: f64, full_evalue: f64, dropone_evalues: Vec<f64>) -> Self {
        let selected = threshold_select(full_evalue, &dropone_evalues, delta);
        Self {
            tau_n,
            delta,
            full_evalue,
            dropone_evalues,
            selected,
        }
    }

    /// Same e-values, different threshold shift.
    pub fn with_delta(&self, delta: f64) -> Self {
        Self::new(self.tau_n, delta, self.full_evalue, self.dropone_evalues.clone())
    }
}

/// `{ j : dropone[j] < (1 − δ)·full }`, strict.
pub fn threshold_select(full_evalue: f64, dropone: &[f64], delta: f64) -> Vec<usize> {
    let cutoff = (1.0 - delta) * full_evalue;
    (0..dropone.len()).filter(|&j| dropone[j] < cutoff).collect()
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > -1.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("delta must exceed -1, got {delta}")))
    }
}

fn check_dims(t: &BootstrapCloud, t1: &BootstrapCloud) -> Result<()> {
    if t.dim() != t1.dim() {
        return Err(Error::dims("cloud dimension", t.dim(), t1.dim()));
    }
    Ok(())
}

/// Mean depth of the plug-in resamples of `spec` over `t1`.
pub fn evalue_with(spec: &ModelSpec, depth: &PreparedDepth<'_>, t1: &BootstrapCloud) -> Result<f64> {
    if spec.dim() != t1.dim() {
        return Err(Error::dims("model dimension", t1.dim(), spec.dim()));
    }
    let depths: Vec<f64> = (0..t1.len())
        .into_par_iter()
        .map(|r| depth.depth(&plugin_estimate(&t1.row(r), spec)))
        .collect();
    Ok(depths.iter().sum::<f64>() / t1.len() as f64)
}

/// e-value of `spec` with reference cloud `t` and evaluation cloud `t1`.
///
/// `seed` feeds the projection directions and is ignored by Mahalanobis depth.
pub fn evalue_of_model(
    spec: &ModelSpec,
    t: &BootstrapCloud,
    t1: &BootstrapCloud,
    depth: &DepthKind,
    seed: u64,
) -> Result<f64> {
    check_dims(t, t1)?;
    let prepared = depth.prepare(t.stats()?, seed)?;
    evalue_with(spec, &prepared, t1)
}

/// Drop-one e-values by evaluating each plug-in point directly.
pub fn dropone_evalues_direct(depth: &PreparedDepth<'_>, t1: &BootstrapCloud) -> Result<Vec<f64>> {
    let p = t1.dim();
    (0..p)
        .into_par_iter()
        .map(|j| evalue_with(&ModelSpec::drop_one(p, j)?, depth, t1))
        .collect()
}

/// Drop-one e-values. For Mahalanobis depth zeroing coordinate `j` of `x`
/// gives `d²_j = d² − 2xⱼ(Σ⁻¹(x − μ))ⱼ + xⱼ²(Σ⁻¹)ⱼⱼ`, so all `p'` models cost
/// one solve per row.
pub fn dropone_evalues(depth: &PreparedDepth<'_>, t1: &BootstrapCloud) -> Result<Vec<f64>> {
    let cloud = match depth {
        PreparedDepth::Mahalanobis(cloud) => *cloud,
        PreparedDepth::Projection(_) => return dropone_evalues_direct(depth, t1),
    };
    let p = t1.dim();
    if cloud.dim() != p {
        return Err(Error::dims("cloud dimension", cloud.dim(), p));
    }
    let prec_diag = cloud.precision_diagonal();
    let per_row: Vec<DVector<f64>> = (0..t1.len())
        .into_par_iter()
        .map(|r| {
            let x = t1.row(r);
            let (u, d2) = cloud.precision_times_centered(&x);
            DVector::from_fn(p, |j, _| {
                let c = x[j];
                let d2j = (d2 - 2.0 * c * u[j] + c * c * prec_diag[j]).max(0.0);
                1.0 / (1.0 + d2j)
            })
        })
        .collect();
    let mut sums = DVector::zeros(p);
    for row in &per_row {
        sums += row;
    }
    Ok((sums / t1.len() as f64).iter().copied().collect())
}

/// Full and drop-one e-values against fixed clouds, thresholded at `delta`.
pub fn select_with_clouds(
    t: &BootstrapCloud,
    t1: &BootstrapCloud,
    delta: f64,
    depth: &DepthKind,
    seed: u64,
) -> Result<EValueReport> {
    check_delta(delta)?;
    check_dims(t, t1)?;
    let prepared = depth.prepare(t.stats()?, seed)?;
    let full = evalue_with(&ModelSpec::full(t.dim()), &prepared, t1)?;
    let dropone = dropone_evalues(&prepared, t1)?;
    Ok(EValueReport::new(t.tau_n(), delta, full, dropone))
}

/// One-pass best-subset selection: draw `T` and `T₁`, score the full model
/// and every drop-one model, keep `j` when `ê(M₋ⱼ) < (1 − δ)·ê(M*)`.
pub fn select(fit: &FittedModel, config: &GbsConfig, delta: f64, depth: &DepthKind) -> Result<EValueReport> {
    check_delta(delta)?;
    let (t, t1) = make_clouds(fit, config)?;
    select_with_clouds(&t, &t1, delta, depth, config.seed)
}

/// e-values of all `2^p'` zero-constrained models against the same clouds.
/// Entry `mask` has coordinate `j` estimable iff bit `j` of `mask` is set.
pub fn exhaustive_with_clouds(
    t: &BootstrapCloud,
    t1: &BootstrapCloud,
    depth: &DepthKind,
    seed: u64,
) -> Result<Vec<(ModelSpec, f64)>> {
    check_dims(t, t1)?;
    let p = t.dim();
    if p > EXHAUSTIVE_MAX_DIM {
        return Err(Error::Unsupported(format!(
            "exhaustive scan over 2^{p} models (limit p' = {EXHAUSTIVE_MAX_DIM})"
        )));
    }
    let prepared = depth.prepare(t.stats()?, seed)?;
    (0u32..(1u32 << p))
        .into_par_iter()
        .map(|mask| {
            let support: Vec<usize> = (0..p).filter(|&j| mask & (1 << j) != 0).collect();
            let spec = ModelSpec::zero_constrained(p, &support)?;
            let e = evalue_with(&spec, &prepared, t1)?;
            Ok((spec, e))
        })
        .collect()
}

/// Small-`p'` oracle: e-values of every zero-constrained model.
pub fn exhaustive_evalue_scan(
    fit: &FittedModel,
    config: &GbsConfig,
    depth: &DepthKind,
) -> Result<Vec<(ModelSpec, f64)>> {
    if fit.dim() > EXHAUSTIVE_MAX_DIM {
        return Err(Error::Unsupported(format!(
            "exhaustive scan over 2^{} models (limit p' = {EXHAUSTIVE_MAX_DIM})",
            fit.dim()
        )));
    }
    let (t, t1) = make_clouds(fit, config)?;
    exhaustive_with_clouds(&t, &t1, depth, config.seed)
}

/// Support of the highest e-value in an exhaustive scan (first on ties).
pub fn argmax_support(scan: &[(ModelSpec, f64)]) -> Option<Vec<usize>> {
    scan.iter()
        .fold(None::<&(ModelSpec, f64)>, |best, cand| match best {
            Some(b) if b.1 >= cand.1 => Some(b),
            _ => Some(cand),
        })
        .map(|(spec, _)| spec.support())
}
