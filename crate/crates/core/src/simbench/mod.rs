//! Synthetic benchmarks: the linear and mixed-model generators, per-replication
//! metrics and the replication harness.

mod generate;
mod harness;
mod metrics;
mod scenario;

pub use generate::{ar1_covariance, gen_linear, gen_mixed, LinearSimConfig, MixedData, MixedSimConfig};
pub use harness::{
    replication_seed, run_cell, run_scenario, CellResult, DeltaRow, Failure, MethodConfig, MethodOverrides,
    ReplicationRecord, ScenarioReport, TauScale, MIXED_DESIGN_NOTE,
};
pub use metrics::{aggregate, compute_metrics, Aggregate, MetricsRow};
pub use scenario::{Cell, CellKind, LinearCellSpec, MixedCellSpec, Scenario, ScenarioFile, BUILTIN_SCENARIOS};
