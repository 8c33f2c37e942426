use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::{LinearSimConfig, MixedSimConfig};
use super::harness::{MethodConfig, MethodOverrides};
use crate::error::{Error, Result};

/// Names accepted by [`Scenario::builtin`].
pub const BUILTIN_SCENARIOS: [&str; 6] = ["linear-s1", "linear-s2", "linear-s3", "highdim", "mixed-s1", "mixed-s2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Linear(LinearSimConfig),
    Mixed(MixedSimConfig),
}

impl CellKind {
    pub fn truth_support(&self) -> Vec<usize> {
        match self {
            CellKind::Linear(c) => c.truth_support(),
            CellKind::Mixed(c) => c.truth_support(),
        }
    }

    pub fn setting(&self) -> &str {
        match self {
            CellKind::Linear(c) => &c.setting,
            CellKind::Mixed(c) => &c.setting,
        }
    }
}

/// One data-generating configuration within a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    pub kind: CellKind,
}

/// A list of cells sharing a method configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub cells: Vec<Cell>,
    pub method: MethodConfig,
    pub reps: usize,
    pub seed: u64,
}

fn linear_cell(label: String, cfg: LinearSimConfig) -> Cell {
    Cell {
        label,
        kind: CellKind::Linear(cfg),
    }
}

impl Scenario {
    pub fn builtin(name: &str) -> Option<Scenario> {
        let linear = MethodConfig::linear_default();
        let (cells, method, reps) = match name {
            "linear-s1" => (
                (1..=9)
                    .map(|k| {
                        let rho = k as f64 / 10.0;
                        linear_cell(format!("rho={rho:.1}"), LinearSimConfig::setting1(rho))
                    })
                    .collect(),
                linear,
                100,
            ),
            "linear-s2" => (
                [5, 10, 15, 20, 25]
                    .iter()
                    .map(|&k| linear_cell(format!("k={k}"), LinearSimConfig::setting2(k)))
                    .collect(),
                linear,
                100,
            ),
            "linear-s3" => (
                (0..=10)
                    .map(|k| {
                        let sigma = 0.3 + 0.2 * k as f64;
                        linear_cell(format!("sigma={sigma:.1}"), LinearSimConfig::setting3(sigma))
                    })
                    .collect(),
                linear,
                100,
            ),
            "highdim" => (
                vec![linear_cell(
                    "n=100,p=500".into(),
                    LinearSimConfig::with_prefix(100, 500, 0.5, 1.0, &[1.5, 0.5, 1.0, 1.5, 1.0], "highdim"),
                )],
                linear,
                100,
            ),
            "mixed-s1" | "mixed-s2" => {
                let cfg = if name == "mixed-s1" {
                    MixedSimConfig::setting1()
                } else {
                    MixedSimConfig::setting2()
                };
                let label = format!("m={},n_i={}", cfg.m, cfg.n_i);
                (
                    vec![Cell {
                        label,
                        kind: CellKind::Mixed(cfg),
                    }],
                    MethodConfig::mixed_default(),
                    100,
                )
            }
            _ => return None,
        };
        Some(Scenario {
            name: name.to_string(),
            cells,
            method,
            reps,
            seed: 1,
        })
    }

    /// Parse a TOML scenario file; see [`ScenarioFile`].
    pub fn from_toml_str(text: &str) -> Result<Scenario> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::InvalidInput(format!("scenario file: {e}")))?;
        file.into_scenario()
    }

    pub fn from_path(path: &Path) -> Result<Scenario> {
        Scenario::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// On-disk scenario schema.
///
/// ```toml
/// name = "small-linear"
/// reps = 20
/// seed = 3
///
/// [method]            # every key optional
/// tau_grid = [0.2, 0.6, 1.0]
/// tau_scale = "logn_sqrtlogp"   # or "none"
/// deltas = [0.0, 0.05]
/// r = 500
/// r1 = 500
/// depth = { kind = "mahalanobis" }
/// form = "printed"
/// screen = "auto"               # "off", "auto" or { fixed = 20 }
///
/// [[linear]]
/// n = 200
/// p = 20
/// rho = 0.5
/// sigma = 1.0
/// beta_prefix = [1.5, 0.5, 1.0]
///
/// [[mixed]]
/// m = 30
/// n_i = 5
/// ```
///
/// A file holding only `[[mixed]]` cells starts from the mixed-model method
/// defaults, otherwise from the linear ones.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub reps: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub method: MethodOverrides,
    #[serde(default)]
    pub linear: Vec<LinearCellSpec>,
    #[serde(default)]
    pub mixed: Vec<MixedCellSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearCellSpec {
    pub label: Option<String>,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub sigma: f64,
    pub beta_prefix: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedCellSpec {
    pub label: Option<String>,
    pub m: usize,
    pub n_i: usize,
    pub beta0: Option<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
    pub sigma2: Option<f64>,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario> {
        if self.linear.is_empty() && self.mixed.is_empty() {
            return Err(Error::InvalidInput("scenario file defines no cells".into()));
        }
        let base = if self.linear.is_empty() {
            MethodConfig::mixed_default()
        } else {
            MethodConfig::linear_default()
        };
        let method = self.method.apply(base);
        let mut cells = Vec::new();
        for (k, c) in self.linear.into_iter().enumerate() {
            if c.beta_prefix.len() > c.p {
                return Err(Error::InvalidInput(format!(
                    "linear cell {}: beta_prefix longer than p = {}",
                    k + 1,
                    c.p
                )));
            }
            let cfg = LinearSimConfig::with_prefix(c.n, c.p, c.rho, c.sigma, &c.beta_prefix, &self.name);
            cfg.validate()
                .map_err(|e| Error::InvalidInput(format!("linear cell {}: {e}", k + 1)))?;
            let label = c
                .label
                .unwrap_or_else(|| format!("n={},p={},rho={},sigma={}", c.n, c.p, c.rho, c.sigma));
            cells.push(linear_cell(label, cfg));
        }
        for (k, c) in self.mixed.into_iter().enumerate() {
            let mut cfg = MixedSimConfig::new(c.m, c.n_i, &self.name);
            if let Some(b) = c.beta0 {
                cfg.beta0 = b;
            }
            if let Some(d) = c.delta {
                if d.len() != 16 {
                    return Err(Error::InvalidInput(format!(
                        "mixed cell {}: delta needs 16 row-major entries, got {}",
                        k + 1,
                        d.len()
                    )));
                }
                cfg.delta = d;
            }
            if let Some(s) = c.sigma2 {
                cfg.sigma2 = s;
            }
            if c.m == 0 || c.n_i == 0 || !(cfg.sigma2 > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "mixed cell {}: m, n_i and sigma2 must be positive",
                    k + 1
                )));
            }
            let label = c.label.unwrap_or_else(|| format!("m={},n_i={}", c.m, c.n_i));
            cells.push(Cell {
                label,
                kind: CellKind::Mixed(cfg),
            });
        }
        Ok(Scenario {
            name: self.name,
            cells,
            method,
            reps: self.reps.unwrap_or(100),
            seed: self.seed.unwrap_or(1),
        })
    }
}
