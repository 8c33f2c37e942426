use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::model::Dataset;

/// Selection and prediction quality of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Percentage of null features selected.
    pub fpr: f64,
    /// Percentage of true features missed.
    pub fnr: f64,
    pub exact_recovery: bool,
    pub model_size: usize,
    pub mspe: f64,
}

/// `selected` and `truth` are zero-based feature indices; `refit` is the
/// full-length coefficient vector used for prediction on `test`.
pub fn compute_metrics(selected: &[usize], truth: &[usize], refit: &DVector<f64>, test: &Dataset) -> MetricsRow {
    let p = test.p();
    let in_truth = |j: &usize| truth.contains(j);
    let false_pos = selected.iter().filter(|j| !in_truth(j)).count();
    let missed = truth.iter().filter(|j| !selected.contains(j)).count();
    let nulls = p - truth.len();
    let fpr = if nulls == 0 {
        0.0
    } else {
        100.0 * false_pos as f64 / nulls as f64
    };
    let fnr = if truth.is_empty() {
        0.0
    } else {
        100.0 * missed as f64 / truth.len() as f64
    };
    let mut sel = selected.to_vec();
    sel.sort_unstable();
    let mut tr = truth.to_vec();
    tr.sort_unstable();
    let resid = test.y() - test.x() * refit;
    MetricsRow {
        fpr,
        fnr,
        exact_recovery: sel == tr,
        model_size: selected.len(),
        mspe: resid.norm_squared() / test.n() as f64,
    }
}

/// Aggregate of a set of replications at one threshold shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub reps: usize,
    pub fpr: f64,
    pub fnr: f64,
    /// Percentage of exact recoveries.
    pub acc: f64,
    pub mean_ms: f64,
    pub median_ms: f64,
    /// Percentage of selections containing the true support.
    pub superset: f64,
    pub mspe: f64,
}

/// Means over `rows`; `None` when empty.
pub fn aggregate(rows: &[MetricsRow]) -> Option<Aggregate> {
    if rows.is_empty() {
        return None;
    }
    let k = rows.len() as f64;
    let mean = |f: &dyn Fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / k;
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.model_size).collect();
    sizes.sort_unstable();
    let mid = sizes.len() / 2;
    let median_ms = if sizes.len() % 2 == 1 {
        sizes[mid] as f64
    } else {
        (sizes[mid - 1] + sizes[mid]) as f64 / 2.0
    };
    Some(Aggregate {
        reps: rows.len(),
        fpr: mean(&|r| r.fpr),
        fnr: mean(&|r| r.fnr),
        acc: mean(&|r| if r.exact_recovery { 100.0 } else { 0.0 }),
        mean_ms: mean(&|r| r.model_size as f64),
        median_ms,
        superset: mean(&|r| if r.fnr == 0.0 { 100.0 } else { 0.0 }),
        mspe: mean(&|r| r.mspe),
    })
}
