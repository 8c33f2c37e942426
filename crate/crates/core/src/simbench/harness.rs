use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{gen_linear, gen_mixed};
use super::metrics::{aggregate, compute_metrics, Aggregate, MetricsRow};
use super::scenario::{Cell, CellKind, Scenario};
use crate::depth::DepthKind;
use crate::error::{Error, Result};
use crate::gbs::{GbsConfig, ResampleForm, DEFAULT_R};
use crate::model::{fit, Dataset, Family};
use crate::rng;
use crate::screening::{sis_screen, ScreenMode};
use crate::tuning::{logn_sqrtlogp, mixed_grid, tune_select_deltas, LINEAR_GRID};

/// Multiplier applied to the base `τₙ` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauScale {
    #[default]
    None,
    /// `ln(n)·√ln(p)` with the pre-screening `p`.
    LognSqrtlogp,
}

impl TauScale {
    pub fn factor(&self, n: usize, p: usize) -> f64 {
        match self {
            TauScale::None => 1.0,
            TauScale::LognSqrtlogp => logn_sqrtlogp(n, p),
        }
    }
}

impl std::str::FromStr for TauScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TauScale::None),
            "logn_sqrtlogp" => Ok(TauScale::LognSqrtlogp),
            other => Err(Error::InvalidInput(format!(
                "tau scale must be none or logn_sqrtlogp, got {other:?}"
            ))),
        }
    }
}

/// Everything about the selection procedure that a replication needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub tau_grid: Vec<f64>,
    pub tau_scale: TauScale,
    pub deltas: Vec<f64>,
    pub r: usize,
    pub r1: usize,
    pub depth: DepthKind,
    pub form: ResampleForm,
    pub screen: ScreenMode,
}

impl MethodConfig {
    pub fn linear_default() -> Self {
        Self {
            tau_grid: LINEAR_GRID.to_vec(),
            tau_scale: TauScale::LognSqrtlogp,
            deltas: vec![0.0],
            r: DEFAULT_R,
            r1: DEFAULT_R,
            depth: DepthKind::Mahalanobis,
            form: ResampleForm::Printed,
            screen: ScreenMode::Auto,
        }
    }

    pub fn mixed_default() -> Self {
        Self {
            tau_grid: mixed_grid(),
            tau_scale: TauScale::None,
            deltas: vec![0.0, 0.01, 0.05, 0.1, 0.15],
            screen: ScreenMode::Off,
            ..Self::linear_default()
        }
    }

    /// `τₙ` values actually used for data with `n` units and `p` features.
    pub fn scaled_grid(&self, n: usize, p: usize) -> Vec<f64> {
        let f = self.tau_scale.factor(n, p);
        self.tau_grid.iter().map(|t| t * f).collect()
    }
}

/// Optional replacements for [`MethodConfig`] fields.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodOverrides {
    pub tau_grid: Option<Vec<f64>>,
    pub tau_scale: Option<TauScale>,
    pub deltas: Option<Vec<f64>>,
    pub r: Option<usize>,
    pub r1: Option<usize>,
    pub depth: Option<DepthKind>,
    pub form: Option<ResampleForm>,
    pub screen: Option<ScreenMode>,
}

impl MethodOverrides {
    pub fn apply(self, mut base: MethodConfig) -> MethodConfig {
        if let Some(v) = self.tau_grid {
            base.tau_grid = v;
        }
        if let Some(v) = self.tau_scale {
            base.tau_scale = v;
        }
        if let Some(v) = self.deltas {
            base.deltas = v;
        }
        if let Some(v) = self.r {
            base.r = v;
        }
        if let Some(v) = self.r1 {
            base.r1 = v;
        }
        if let Some(v) = self.depth {
            base.depth = v;
        }
        if let Some(v) = self.form {
            base.form = v;
        }
        if let Some(v) = self.screen {
            base.screen = v;
        }
        base
    }
}

/// Outcome of one replication at one threshold shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub seed: u64,
    pub delta: f64,
    pub tau_n: f64,
    pub selected: Vec<usize>,
    pub metrics: MetricsRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub rep: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub delta: f64,
    /// `None` when every replication failed.
    pub aggregate: Option<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub label: String,
    pub setting: String,
    pub truth: Vec<usize>,
    pub failures: Vec<Failure>,
    pub rows: Vec<DeltaRow>,
    #[serde(skip)]
    pub records: Vec<ReplicationRecord>,
}

impl CellResult {
    pub fn row(&self, delta: f64) -> Option<&Aggregate> {
        self.rows.iter().find(|r| r.delta == delta)?.aggregate.as_ref()
    }
}

fn replicate(cell: &Cell, method: &MethodConfig, rep: usize, seed: u64) -> Result<Vec<ReplicationRecord>> {
    let train_seed = rng::derive_seed(seed, rng::label::TRAIN);
    let test_seed = rng::derive_seed(seed, rng::label::TEST);
    let (train, test, random_design) = match &cell.kind {
        CellKind::Linear(cfg) => {
            let (train, test) = gen_linear(cfg, seed);
            (train, test, None)
        }
        CellKind::Mixed(cfg) => {
            let train = gen_mixed(cfg, train_seed);
            let test = gen_mixed(cfg, test_seed);
            (train.data, test.data, Some(train.random_design))
        }
    };
    let (n, p) = (train.n(), train.p());
    let kept: Vec<usize> = match method.screen.target(n, p) {
        Some(d) => sis_screen(&train, d),
        None => (0..p).collect(),
    };
    let work: Dataset = if kept.len() == p {
        train
    } else {
        train.select_features(&kept)
    };
    let family = match random_design {
        Some(random_design) => Family::Lmm { random_design },
        None => Family::Ols,
    };
    let full = fit(&work, &family)?;
    let template = GbsConfig {
        tau_n: 1.0,
        r: method.r,
        r1: method.r1,
        seed,
        form: method.form,
    };
    let grid = method.scaled_grid(n, p);
    let results = tune_select_deltas(&work, &full, &grid, &method.deltas, &template, &method.depth)?;
    let truth = cell.kind.truth_support();
    Ok(results
        .into_iter()
        .map(|res| {
            let best = res.best_point();
            let selected: Vec<usize> = best.selected.iter().map(|&j| kept[j]).collect();
            let mut coef = DVector::zeros(p);
            for (k, &j) in kept.iter().enumerate() {
                coef[j] = best.refit[k];
            }
            ReplicationRecord {
                rep,
                seed,
                delta: res.delta,
                tau_n: best.tau_n,
                metrics: compute_metrics(&selected, &truth, &coef, &test),
                selected,
            }
        })
        .collect())
}

/// Seed of replication `rep`.
pub fn replication_seed(master_seed: u64, rep: usize) -> u64 {
    rng::derive_indexed(master_seed, rng::label::REPLICATION, rep as u64)
}

/// Run `n_reps` independent replications of `cell`. Failed replications are
/// recorded and left out of the aggregates.
pub fn run_cell(cell: &Cell, method: &MethodConfig, n_reps: usize, master_seed: u64) -> Result<CellResult> {
    if n_reps == 0 {
        return Err(Error::InvalidInput("at least one replication is required".into()));
    }
    if method.deltas.is_empty() {
        return Err(Error::InvalidInput("delta grid is empty".into()));
    }
    let outcomes: Vec<Result<Vec<ReplicationRecord>>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| replicate(cell, method, rep, replication_seed(master_seed, rep)))
        .collect();
    let mut failures = Vec::new();
    let mut records = Vec::new();
    for (rep, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => records.extend(r),
            Err(e) => failures.push(Failure {
                rep,
                message: e.to_string(),
            }),
        }
    }
    let rows = method
        .deltas
        .iter()
        .map(|&delta| {
            let ms: Vec<MetricsRow> = records
                .iter()
                .filter(|r| r.delta == delta)
                .map(|r| r.metrics.clone())
                .collect();
            DeltaRow {
                delta,
                aggregate: aggregate(&ms),
            }
        })
        .collect();
    Ok(CellResult {
        label: cell.label.clone(),
        setting: cell.kind.setting().to_string(),
        truth: cell.kind.truth_support(),
        failures,
        rows,
        records,
    })
}

pub const MIXED_DESIGN_NOTE: &str =
    "mixed design: X and R slope columns iid N(0,1), R column 1 is an intercept, U drawn by eigendecomposition of Delta";

/// Aggregate results of a scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema: u32,
    pub scenario: String,
    pub reps: usize,
    pub seed: u64,
    pub method: MethodConfig,
    pub design: Option<String>,
    pub cells: Vec<CellResult>,
}

/// Run every cell of `scenario`; all cells share the replication seeds.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioReport> {
    let cells = scenario
        .cells
        .iter()
        .map(|c| run_cell(c, &scenario.method, scenario.reps, scenario.seed))
        .collect::<Result<Vec<_>>>()?;
    let has_mixed = scenario.cells.iter().any(|c| matches!(c.kind, CellKind::Mixed(_)));
    Ok(ScenarioReport {
        schema: 1,
        scenario: scenario.name.clone(),
        reps: scenario.reps,
        seed: scenario.seed,
        method: scenario.method.clone(),
        design: has_mixed.then(|| MIXED_DESIGN_NOTE.to_string()),
        cells,
    })
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn fmt(x: f64) -> String {
    format!("{x:.4}")
}

impl ScenarioReport {
    /// Table with one row per (cell, δ), preceded by `#` lines echoing the
    /// configuration.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let m = &self.method;
        writeln!(
            out,
            "# schema=1 scenario={} reps={} seed={}",
            self.scenario, self.reps, self.seed
        )?;
        writeln!(
            out,
            "# tau_grid={} tau_scale={:?} deltas={} R={} R1={} depth={:?} form={:?} screen={:?}",
            list(&m.tau_grid),
            m.tau_scale,
            list(&m.deltas),
            m.r,
            m.r1,
            m.depth,
            m.form,
            m.screen
        )?;
        if let Some(d) = &self.design {
            writeln!(out, "# {d}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "setting",
            "cell",
            "delta",
            "reps",
            "failures",
            "fpr",
            "fnr",
            "acc",
            "mean_ms",
            "median_ms",
            "superset",
            "mspe",
        ])?;
        for cell in &self.cells {
            for row in &cell.rows {
                let mut rec = vec![cell.setting.clone(), cell.label.clone(), row.delta.to_string()];
                match &row.aggregate {
                    Some(a) => rec.extend([
                        a.reps.to_string(),
                        cell.failures.len().to_string(),
                        fmt(a.fpr),
                        fmt(a.fnr),
                        fmt(a.acc),
                        fmt(a.mean_ms),
                        fmt(a.median_ms),
                        fmt(a.superset),
                        fmt(a.mspe),
                    ]),
                    None => {
                        rec.extend(["0".to_string(), cell.failures.len().to_string()]);
                        rec.extend(std::iter::repeat_n(String::new(), 7));
                    }
                }
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
