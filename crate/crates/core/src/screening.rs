//! Sure independence screening: keep the `d` features with the largest
//! absolute marginal Pearson correlation with the response.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use crate::model::Dataset;

/// `⌊n / ln n⌋`, capped at `min(p, n − 2)` and floored at 1.
pub fn default_screen_size(n: usize, p: usize) -> usize {
    let raw = if n > 1 {
        (n as f64 / (n as f64).ln()).floor() as usize
    } else {
        1
    };
    raw.min(p).min(n.saturating_sub(2)).max(1)
}

/// Absolute Pearson correlation of every feature with the response; constant
/// columns get 0.
pub fn marginal_correlations(data: &Dataset) -> Vec<f64> {
    let n = data.n() as f64;
    let y = data.y();
    let y_mean = y.mean();
    let y_ss = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>();
    let x = data.x();
    (0..data.p())
        .into_par_iter()
        .map(|j| {
            let col = x.column(j);
            let mean = col.sum() / n;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (xi, yi) in col.iter().zip(y.iter()) {
                let dx = xi - mean;
                sxy += dx * (yi - y_mean);
                sxx += dx * dx;
            }
            if sxx <= 0.0 || y_ss <= 0.0 {
                0.0
            } else {
                (sxy / (sxx * y_ss).sqrt()).abs()
            }
        })
        .collect()
}

/// Indices of the `min(d, p)` most correlated features, sorted ascending.
/// Ties in correlation favour the lower index.
pub fn sis_screen(data: &Dataset, d: usize) -> Vec<usize> {
    let p = data.p();
    if d >= p {
        return (0..p).collect();
    }
    let corr = marginal_correlations(data);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| corr[b].total_cmp(&corr[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = order.into_iter().take(d).collect();
    kept.sort_unstable();
    kept
}

/// When and how hard to screen before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScreenMode {
    /// Screen to the default size when `p ≥ n`.
    #[default]
    Auto,
    Off,
    /// Always screen to this many features.
    Fixed(usize),
}

impl ScreenMode {
    /// Number of features to keep, or `None` for no screening.
    pub fn target(&self, n: usize, p: usize) -> Option<usize> {
        match *self {
            ScreenMode::Auto if p >= n => Some(default_screen_size(n, p)),
            ScreenMode::Auto | ScreenMode::Off => None,
            ScreenMode::Fixed(d) => Some(d),
        }
    }
}

impl FromStr for ScreenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ScreenMode::Auto),
            "off" => Ok(ScreenMode::Off),
            other => other
                .strip_prefix("d=")
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&d| d >= 1)
                .map(ScreenMode::Fixed)
                .ok_or_else(|| Error::InvalidInput(format!("screen mode must be auto, off or d=<int>, got {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn data(seed: u64, n: usize, p: usize, signal: f64) -> Dataset {
        let mut rng = rng::stream_rng(seed, 0);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = x.column(0) * signal + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        Dataset::new(x, y, None).unwrap()
    }

    #[test]
    fn keeps_everything_when_d_covers_p() {
        let d = data(1, 20, 5, 1.0);
        assert_eq!(sis_screen(&d, 5), vec![0, 1, 2, 3, 4]);
        assert_eq!(sis_screen(&d, 50), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn screen_mode_parsing() {
        assert_eq!("auto".parse::<ScreenMode>().unwrap(), ScreenMode::Auto);
        assert_eq!("off".parse::<ScreenMode>().unwrap(), ScreenMode::Off);
        assert_eq!("d=7".parse::<ScreenMode>().unwrap(), ScreenMode::Fixed(7));
        assert!("d=0".parse::<ScreenMode>().is_err());
        assert!("sometimes".parse::<ScreenMode>().is_err());
        assert_eq!(ScreenMode::Auto.target(100, 500), Some(21));
        assert_eq!(ScreenMode::Auto.target(500, 100), None);
        assert_eq!(ScreenMode::Fixed(4).target(500, 100), Some(4));
    }

    #[test]
    fn default_size() {
        assert_eq!(default_screen_size(100, 500), 21);
        assert_eq!(default_screen_size(100, 10), 10);
        assert_eq!(default_screen_size(5, 500), 3);
    }

    #[test]
    fn constant_column_scores_zero() {
        let mut x = DMatrix::from_fn(10, 2, |i, _| i as f64);
        x.set_column(1, &DVector::from_element(10, 3.0));
        let y = DVector::from_fn(10, |i, _| i as f64);
        let d = Dataset::new(x, y, None).unwrap();
        assert_eq!(marginal_correlations(&d)[1], 0.0);
        assert_eq!(sis_screen(&d, 1), vec![0]);
    }

    #[test]
    fn single_strong_feature_is_found() {
        let mut hits = 0;
        for seed in 0..50 {
            let d = data(100 + seed, 500, 20, 3.0);
            hits += (sis_screen(&d, 1) == vec![0]) as usize;
        }
        assert!(hits >= 48, "{hits}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn scale_invariant_and_sized(seed in 0u64..500, scale in 0.01f64..100.0, d in 1usize..12) {
            let base = data(seed, 40, 10, 1.0);
            let out = sis_screen(&base, d);
            prop_assert_eq!(out.len(), d.min(10));
            prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
            let mut x = base.x().clone();
            let j = (seed % 10) as usize;
            x.column_mut(j).scale_mut(scale);
            let scaled = Dataset::new(x, base.y().clone(), None).unwrap();
            prop_assert_eq!(sis_screen(&scaled, d), out);
        }
    }
}
