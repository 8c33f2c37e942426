use eselect::evalue::{argmax_support, evalue_of_model, exhaustive_evalue_scan, select};
use eselect::gbs::make_clouds;
use eselect::rng::stream_rng;
use eselect::{fit, Dataset, DepthKind, Family, GbsConfig, ModelSpec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn ols_data(seed: u64, n: usize, beta: &[f64]) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    let x = DMatrix::from_fn(n, beta.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &x * DVector::from_column_slice(beta) + noise;
    Dataset::new(x, y, None).unwrap()
}

fn config(n: usize, seed: u64) -> GbsConfig {
    GbsConfig::new((n as f64).ln(), seed)
}

#[test]
fn adequate_chain_is_ordered_above_inadequate_models() {
    let beta = [2.0, 2.0, 2.0, 0.0, 0.0, 0.0];
    let chain = [
        vec![0, 1, 2],
        vec![0, 1, 2, 3],
        vec![0, 1, 2, 3, 4],
        vec![0, 1, 2, 3, 4, 5],
    ];
    let inadequate = [
        vec![1, 2],
        vec![0, 2],
        vec![0, 1],
        vec![1, 2, 3, 4, 5],
        vec![0, 2, 3, 4, 5],
        vec![0, 1, 3, 4, 5],
    ];
    let n = 8000;
    let mut ok = 0;
    for seed in 0..8 {
        let full = fit(&ols_data(seed, n, &beta), &Family::Ols).unwrap();
        let (t, t1) = make_clouds(&full.fitted, &config(n, seed)).unwrap();
        let e = |s: &[usize]| {
            let spec = ModelSpec::zero_constrained(6, s).unwrap();
            evalue_of_model(&spec, &t, &t1, &DepthKind::Mahalanobis, seed).unwrap()
        };
        let chain_e: Vec<f64> = chain.iter().map(|s| e(s)).collect();
        let worst_inadequate = inadequate.iter().map(|s| e(s)).fold(f64::MIN, f64::max);
        let decreasing = chain_e.windows(2).all(|w| w[0] > w[1]);
        if decreasing && worst_inadequate < chain_e[3] {
            ok += 1;
        }
    }
    assert!(ok >= 7, "{ok} of 8");
}

#[test]
fn exhaustive_argmax_agrees_with_one_pass_selection() {
    let beta = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let n = 1000;
    let mut agree = 0;
    for seed in 0..12 {
        let full = fit(&ols_data(100 + seed, n, &beta), &Family::Ols).unwrap();
        let cfg = config(n, seed);
        let scan = exhaustive_evalue_scan(&full.fitted, &cfg, &DepthKind::Mahalanobis).unwrap();
        assert_eq!(scan.len(), 256);
        let best = argmax_support(&scan).unwrap();
        let report = select(&full.fitted, &cfg, 0.0, &DepthKind::Mahalanobis).unwrap();
        if best == vec![0, 1, 2] && report.selected == best {
            agree += 1;
        }
    }
    assert!(agree >= 11, "{agree} of 12");
}

#[test]
fn dropping_a_true_feature_decays_with_n() {
    let beta = [2.0, 2.0, 2.0, 0.0, 0.0, 0.0];
    let drop_first = |n: usize, seed: u64| {
        let full = fit(&ols_data(seed, n, &beta), &Family::Ols).unwrap();
        let (t, t1) = make_clouds(&full.fitted, &config(n, seed)).unwrap();
        let spec = ModelSpec::drop_one(6, 0).unwrap();
        evalue_of_model(&spec, &t, &t1, &DepthKind::Mahalanobis, seed).unwrap()
    };
    for seed in 0..4 {
        let small = drop_first(500, seed);
        let large = drop_first(8000, seed);
        assert!(large < 0.5 * small, "seed {seed}: {large} vs {small}");
    }
}

#[test]
fn larger_shift_never_adds_features() {
    let full = fit(&ols_data(3, 200, &[1.0, 0.2, 0.1, 0.0, 0.0]), &Family::Ols).unwrap();
    let base = select(&full.fitted, &GbsConfig::new(2.0, 3), 0.0, &DepthKind::Mahalanobis).unwrap();
    let mut prev = base.with_delta(-0.5).selected;
    for d in [-0.1, 0.0, 0.01, 0.05, 0.1, 0.15, 0.5, 10.0] {
        let cur = base.with_delta(d).selected;
        assert!(cur.iter().all(|j| prev.contains(j)), "delta {d}");
        prev = cur;
    }
    assert!(prev.is_empty());
}

#[test]
fn selection_is_reproducible_and_order_independent_of_features() {
    let data = ols_data(4, 400, &[1.5, 0.0, 1.0, 0.0]);
    let full = fit(&data, &Family::Ols).unwrap();
    let cfg = GbsConfig::new(4.0, 11);
    let a = select(&full.fitted, &cfg, 0.0, &DepthKind::Mahalanobis).unwrap();
    let b = select(&full.fitted, &cfg, 0.0, &DepthKind::Mahalanobis).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.selected, vec![0, 2]);
}
