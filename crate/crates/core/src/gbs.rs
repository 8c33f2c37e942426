//! Generalized bootstrap by one-step approximation.
//!
//! Each resample reweights the per-unit energies with `𝔹W = 1 + τₙ·W`,
//! `W ∼ Gamma(1,1) − 1`, and is approximated from the full fit without
//! refitting:
//!
//! ```text
//! θ̂_r = θ̂ − (τₙ/aₙ) · H^{-1/2} · Σᵢ Wᵢ ψ′ᵢ(θ̂)        (printed form)
//! θ̂_r = θ̂ − τₙ · H^{-1} · Σᵢ Wᵢ ψ′ᵢ(θ̂)              (sandwich form)
//! ```
//!
//! where `H = Σᵢ ψ″ᵢ(θ̂)`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::CloudStats;
use crate::error::{Error, Result};
use crate::model::FittedModel;
use crate::rng;

pub const DEFAULT_R: usize = 1000;

/// Which one-step map turns weights into a resample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleForm {
    /// `(τₙ/aₙ) H^{-1/2}`.
    #[default]
    Printed,
    /// `τₙ H^{-1}`.
    Sandwich,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbsConfig {
    pub tau_n: f64,
    /// Size of the reference cloud `T`.
    pub r: usize,
    /// Size of the evaluation cloud `T₁`.
    pub r1: usize,
    pub seed: u64,
    pub form: ResampleForm,
}

impl GbsConfig {
    pub fn new(tau_n: f64, seed: u64) -> Self {
        Self {
            tau_n,
            r: DEFAULT_R,
            r1: DEFAULT_R,
            seed,
            form: ResampleForm::Printed,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.tau_n > 0.0 && self.tau_n.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "tau_n must be positive, got {}",
                self.tau_n
            )));
        }
        if self.r <= p || self.r1 <= p {
            return Err(Error::InvalidInput(format!(
                "cloud sizes R = {}, R1 = {} must exceed p' = {p}",
                self.r, self.r1
            )));
        }
        Ok(())
    }
}

/// `n` iid centered weights `G − 1`, `G ∼ Gamma(1,1)`: mean 0, variance 1,
/// bounded below by −1.
pub fn draw_weights(n: usize, stream: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| stream.sample::<f64, _>(Exp1) - 1.0)
}

/// Linear map applied to `Σᵢ Wᵢψ′ᵢ`, including the sign.
fn resample_map(fit: &FittedModel, tau_n: f64, form: ResampleForm) -> DMatrix<f64> {
    match form {
        ResampleForm::Printed => fit.hessian_inv_sqrt() * (-tau_n / fit.a_n()),
        ResampleForm::Sandwich => fit.hessian_inverse() * (-tau_n),
    }
}

/// One-step resample for a given weight vector.
pub fn one_step_resample(
    fit: &FittedModel,
    weights: &DVector<f64>,
    tau_n: f64,
    form: ResampleForm,
) -> Result<DVector<f64>> {
    if weights.len() != fit.n_units() {
        return Err(Error::dims("weight vector", fit.n_units(), weights.len()));
    }
    let map = resample_map(fit, tau_n, form);
    let grad = fit.scores().tr_mul(weights);
    Ok(fit.theta_hat() + map * grad)
}

/// A cloud of bootstrap resamples, one per row.
#[derive(Debug)]
pub struct BootstrapCloud {
    samples: DMatrix<f64>,
    tau_n: f64,
    seed: u64,
    stats: OnceLock<CloudStats>,
}

impl Clone for BootstrapCloud {
    fn clone(&self) -> Self {
        let stats = OnceLock::new();
        if let Some(s) = self.stats.get() {
            let _ = stats.set(s.clone());
        }
        Self {
            samples: self.samples.clone(),
            tau_n: self.tau_n,
            seed: self.seed,
            stats,
        }
    }
}

impl BootstrapCloud {
    /// Resamples `0..count` of stream seed `seed`; row `r` depends only on
    /// `(seed, r)`.
    pub fn generate(fit: &FittedModel, tau_n: f64, form: ResampleForm, seed: u64, count: usize) -> Self {
        let map = resample_map(fit, tau_n, form);
        let n = fit.n_units();
        let rows: Vec<DVector<f64>> = (0..count)
            .into_par_iter()
            .map(|r| {
                let mut stream = rng::stream_rng(seed, r as u64);
                let w = draw_weights(n, &mut stream);
                fit.theta_hat() + &map * fit.scores().tr_mul(&w)
            })
            .collect();
        let p = fit.dim();
        let samples = DMatrix::from_fn(count, p, |i, j| rows[i][j]);
        Self::from_samples(samples, tau_n, seed)
    }

    pub fn from_samples(samples: DMatrix<f64>, tau_n: f64, seed: u64) -> Self {
        Self {
            samples,
            tau_n,
            seed,
            stats: OnceLock::new(),
        }
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn tau_n(&self) -> f64 {
        self.tau_n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, r: usize) -> DVector<f64> {
        self.samples.row(r).transpose()
    }

    /// Mean, covariance and Cholesky factor, computed on first use.
    pub fn stats(&self) -> Result<&CloudStats> {
        if let Some(s) = self.stats.get() {
            return Ok(s);
        }
        let computed = CloudStats::new(self.samples.clone())?;
        Ok(self.stats.get_or_init(|| computed))
    }

    /// Rows as CSV, one resample per line, header `theta_1..theta_p`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record((1..=self.dim()).map(|j| format!("theta_{j}")))?;
        for row in self.samples.row_iter() {
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reference cloud `T` (size `R`) and evaluation cloud `T₁` (size `R₁`) from
/// disjoint streams of `config.seed`.
pub fn make_clouds(fit: &FittedModel, config: &GbsConfig) -> Result<(BootstrapCloud, BootstrapCloud)> {
    config.validate(fit.dim())?;
    let seed_t = rng::derive_seed(config.seed, rng::label::CLOUD_T);
    let seed_t1 = rng::derive_seed(config.seed, rng::label::CLOUD_T1);
    let t = BootstrapCloud::generate(fit, config.tau_n, config.form, seed_t, config.r);
    let t1 = BootstrapCloud::generate(fit, config.tau_n, config.form, seed_t1, config.r1);
    Ok((t, t1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fit_ols, Dataset};
    use rand_distr::StandardNormal;

    fn ols_fit(seed: u64, n: usize, p: usize) -> FittedModel {
        let mut rng = rng::stream_rng(seed, 0);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let beta = DVector::from_fn(p, |j, _| if j == 0 { 2.0 } else { 0.0 });
        let y = &x * beta + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        fit_ols(&Dataset::new(x, y, None).unwrap()).unwrap()
    }

    #[test]
    fn weight_moments() {
        let mut stream = rng::stream_rng(42, 0);
        let w = draw_weights(1_000_000, &mut stream);
        let mean = w.mean();
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (w.len() as f64 - 1.0);
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
        assert!(w.min() >= -1.0);
    }

    #[test]
    fn zero_weights_return_estimate() {
        let fit = ols_fit(1, 50, 3);
        for form in [ResampleForm::Printed, ResampleForm::Sandwich] {
            let r = one_step_resample(&fit, &DVector::zeros(50), 2.0, form).unwrap();
            assert_eq!(&r, fit.theta_hat());
        }
    }

    #[test]
    fn antithetic_weights_average_to_estimate() {
        let fit = ols_fit(2, 50, 3);
        let mut s = rng::stream_rng(2, 1);
        let w = draw_weights(50, &mut s);
        let a = one_step_resample(&fit, &w, 3.0, ResampleForm::Printed).unwrap();
        let b = one_step_resample(&fit, &(-&w), 3.0, ResampleForm::Printed).unwrap();
        assert!(((a + b) * 0.5 - fit.theta_hat()).amax() < 1e-12);
    }

    #[test]
    fn linearity_and_scale_law() {
        let fit = ols_fit(3, 80, 4);
        let mut s = rng::stream_rng(3, 1);
        let w1 = draw_weights(80, &mut s);
        let w2 = draw_weights(80, &mut s);
        let (a, b) = (1.7, -0.4);
        for form in [ResampleForm::Printed, ResampleForm::Sandwich] {
            let delta = |w: &DVector<f64>, tau: f64| one_step_resample(&fit, w, tau, form).unwrap() - fit.theta_hat();
            let combo = delta(&(&w1 * a + &w2 * b), 2.0);
            let lin = delta(&w1, 2.0) * a + delta(&w2, 2.0) * b;
            assert!((combo - lin).amax() < 1e-10);
            let d1 = delta(&w1, 2.0);
            let d2 = delta(&w1, 4.0);
            assert!((d2.norm() - 2.0 * d1.norm()).abs() < 1e-12 * d1.norm().max(1.0));
        }
    }

    #[test]
    fn wrong_weight_length_is_rejected() {
        let fit = ols_fit(4, 30, 2);
        assert!(one_step_resample(&fit, &DVector::zeros(29), 1.0, ResampleForm::Printed).is_err());
    }

    #[test]
    fn clouds_are_deterministic_and_seed_dependent() {
        let fit = ols_fit(5, 60, 3);
        let mut cfg = GbsConfig::new(4.0, 17);
        cfg.r = 50;
        cfg.r1 = 40;
        let (t, t1) = make_clouds(&fit, &cfg).unwrap();
        let (u, u1) = make_clouds(&fit, &cfg).unwrap();
        assert_eq!(t.samples(), u.samples());
        assert_eq!(t1.samples(), u1.samples());
        assert_eq!((t.len(), t1.len()), (50, 40));
        assert_ne!(t.row(0), t1.row(0));
        cfg.seed = 18;
        let (v, _) = make_clouds(&fit, &cfg).unwrap();
        assert_ne!(t.row(0), v.row(0));
    }

    #[test]
    fn row_reproducible_in_isolation() {
        let fit = ols_fit(6, 60, 3);
        let cloud = BootstrapCloud::generate(&fit, 2.0, ResampleForm::Printed, 99, 20);
        let mut stream = rng::stream_rng(99, 7);
        let w = draw_weights(60, &mut stream);
        let direct = one_step_resample(&fit, &w, 2.0, ResampleForm::Printed).unwrap();
        assert!((cloud.row(7) - direct).amax() < 1e-14);
    }

    #[test]
    fn cloud_center_within_five_standard_errors() {
        let fit = ols_fit(7, 400, 3);
        let tau = (400f64).ln();
        let cloud = BootstrapCloud::generate(&fit, tau, ResampleForm::Printed, 5, 4000);
        let stats = cloud.stats().unwrap();
        for j in 0..3 {
            let se = (stats.covariance()[(j, j)] / 4000.0).sqrt();
            assert!((stats.mean()[j] - fit.theta_hat()[j]).abs() < 5.0 * se);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let fit = ols_fit(8, 30, 3);
        let mut cfg = GbsConfig::new(0.0, 1);
        assert!(make_clouds(&fit, &cfg).is_err());
        cfg.tau_n = 1.0;
        cfg.r = 3;
        assert!(make_clouds(&fit, &cfg).is_err());
    }

    #[test]
    fn cloud_csv_dump() {
        let fit = ols_fit(9, 30, 2);
        let cloud = BootstrapCloud::generate(&fit, 1.0, ResampleForm::Printed, 1, 3);
        let mut buf = Vec::new();
        cloud.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("theta_1,theta_2"));
    }
}
