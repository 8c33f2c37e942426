use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::Dataset;
use crate::rng;

/// Linear model `y = Xβ₀ + ε` with Gaussian rows `X ∼ N(0, Σ_X)`,
/// `(Σ_X)ᵢⱼ = ρ^|i−j|`, and `ε ∼ N(0, σ²I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSimConfig {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub beta0: Vec<f64>,
    pub sigma: f64,
    pub setting: String,
}

impl LinearSimConfig {
    /// `β₀ = (1.5, 0.5, 1, 1.5, 1, 0, …)`, `n = 500`, `p = 100`, `σ = 1`.
    pub fn setting1(rho: f64) -> Self {
        Self::with_prefix(500, 100, rho, 1.0, &[1.5, 0.5, 1.0, 1.5, 1.0], "linear-s1")
    }

    /// `β₀ = (1_k, 0, …)`, `ρ = 0.5`, `σ = 1`.
    pub fn setting2(k: usize) -> Self {
        Self::with_prefix(500, 100, 0.5, 1.0, &vec![1.0; k], "linear-s2")
    }

    /// `β₀ = (1_5, 0, …)`, `ρ = 0.5`.
    pub fn setting3(sigma: f64) -> Self {
        Self::with_prefix(500, 100, 0.5, sigma, &[1.0; 5], "linear-s3")
    }

    /// Leading coefficients `prefix`, zero-padded to length `p`.
    pub fn with_prefix(n: usize, p: usize, rho: f64, sigma: f64, prefix: &[f64], setting: &str) -> Self {
        let mut beta0 = vec![0.0; p];
        for (b, v) in beta0.iter_mut().zip(prefix) {
            *b = *v;
        }
        Self {
            n,
            p,
            rho,
            beta0,
            sigma,
            setting: setting.to_string(),
        }
    }

    pub fn truth_support(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| self.beta0[j] != 0.0).collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !(self.sigma > 0.0) {
            return Err(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.beta0.len() != self.p {
            return Err(format!("beta0 has length {}, p = {}", self.beta0.len(), self.p));
        }
        if self.n == 0 || self.p == 0 {
            return Err("n and p must be positive".into());
        }
        Ok(())
    }
}

/// `(Σ)ᵢⱼ = ρ^|i−j|`.
pub fn ar1_covariance(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

fn linear_draw(config: &LinearSimConfig, chol_l: &DMatrix<f64>, seed: u64) -> Dataset {
    let (n, p) = (config.n, config.p);
    let mut rng = rng::stream_rng(seed, 0);
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = z * chol_l.transpose();
    let beta = DVector::from_column_slice(&config.beta0);
    let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * config.sigma);
    let y = &x * beta + noise;
    Dataset::new(x, y, None).expect("generated data is finite")
}

/// Training and test sets of identical dimensions with independent design
/// and noise.
pub fn gen_linear(config: &LinearSimConfig, seed: u64) -> (Dataset, Dataset) {
    let chol_l = ar1_covariance(config.p, config.rho)
        .cholesky()
        .expect("AR(1) covariance with |rho| < 1 is positive definite")
        .unpack();
    let train = linear_draw(config, &chol_l, rng::derive_seed(seed, rng::label::TRAIN));
    let test = linear_draw(config, &chol_l, rng::derive_seed(seed, rng::label::TEST));
    (train, test)
}

/// Grouped model `y = Xβ + RU + ε` with `m` groups of `nᵢ` rows, 9 fixed
/// effects and 4 random effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedSimConfig {
    pub m: usize,
    pub n_i: usize,
    pub beta0: Vec<f64>,
    /// Row-major 4×4 random-effect covariance.
    pub delta: Vec<f64>,
    pub sigma2: f64,
    pub setting: String,
}

impl MixedSimConfig {
    pub fn new(m: usize, n_i: usize, setting: &str) -> Self {
        #[rustfmt::skip]
        let delta = vec![
            9.0, 4.8, 0.6, 0.0,
            4.8, 4.0, 1.0, 0.0,
            0.6, 1.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
        ];
        Self {
            m,
            n_i,
            beta0: vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            delta,
            sigma2: 1.0,
            setting: setting.to_string(),
        }
    }

    /// `m = 30`, `nᵢ = 5`.
    pub fn setting1() -> Self {
        Self::new(30, 5, "mixed-s1")
    }

    /// `m = 60`, `nᵢ = 10`.
    pub fn setting2() -> Self {
        Self::new(60, 10, "mixed-s2")
    }

    pub fn q(&self) -> usize {
        (self.delta.len() as f64).sqrt() as usize
    }

    pub fn delta_matrix(&self) -> DMatrix<f64> {
        let q = self.q();
        DMatrix::from_row_slice(q, q, &self.delta)
    }

    pub fn truth_support(&self) -> Vec<usize> {
        (0..self.beta0.len()).filter(|&j| self.beta0[j] != 0.0).collect()
    }
}

/// Grouped dataset with the per-group random-effects design.
#[derive(Debug, Clone)]
pub struct MixedData {
    pub data: Dataset,
    pub random_design: Vec<DMatrix<f64>>,
}

/// Fixed-effect covariates iid `N(0, 1)`; `Rᵢ = [1, z₁, z₂, z₃]` with iid
/// `N(0, 1)` slopes; `Uᵢ ∼ N(0, Δ)` drawn through the eigendecomposition
/// (Δ is singular); `εᵢ ∼ N(0, σ²I)`.
pub fn gen_mixed(config: &MixedSimConfig, seed: u64) -> MixedData {
    let q = config.q();
    let p = config.beta0.len();
    let eig = SymmetricEigen::new(config.delta_matrix());
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let beta = DVector::from_column_slice(&config.beta0);
    let sigma = config.sigma2.sqrt();

    let mut rng = rng::stream_rng(seed, 0);
    let n = config.m * config.n_i;
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut groups = Vec::with_capacity(config.m);
    let mut designs = Vec::with_capacity(config.m);
    for g in 0..config.m {
        let rows: Vec<usize> = (g * config.n_i..(g + 1) * config.n_i).collect();
        let xg = DMatrix::from_fn(config.n_i, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let zg = DMatrix::from_fn(config.n_i, q, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        let u = &factor * DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let eps = DVector::from_fn(config.n_i, |_, _| rng.sample::<f64, _>(StandardNormal) * sigma);
        let yg = &xg * &beta + &zg * u + eps;
        for (k, &i) in rows.iter().enumerate() {
            x.set_row(i, &xg.row(k));
            y[i] = yg[k];
        }
        groups.push(rows);
        designs.push(zg);
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    let data = Dataset::new(x, y, Some(names))
        .expect("generated data is finite")
        .with_groups(groups)
        .expect("contiguous groups partition the rows");
    MixedData {
        data,
        random_design: designs,
    }
}
