use proptest::prelude::*;
use robust_adrf::adrf::{fit_adrf, AdrfConfig, MethodKind};
use robust_adrf::dgp::{confounder, generate, generate_ts, true_theta, DgpKind, NOISE_SD};
use robust_adrf::extensions::{ts_fit, TsConfig};
use robust_adrf::metrics::shape_metrics;
use robust_adrf::nuisance::{GbtModel, GbtParams, LassoModel};
use robust_adrf::nuisance::{crossfit_arrays, fold_assignment, LearnerKind};
use robust_adrf::AdrfError;

const KINDS: [DgpKind; 7] = [
    DgpKind::Parabola,
    DgpKind::Sinusoidal,
    DgpKind::SinusoidalRegion,
    DgpKind::SinusoidalAsymmetric,
    DgpKind::SinusoidalHeavytail,
    DgpKind::TFamily { nu: 4 },
    DgpKind::IhdpLike,
];

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generation_is_deterministic_and_counts_exactly(
        k in 0usize..KINDS.len(), n in 40usize..400, p in 0.0f64..0.3, seed in 0u64..1000,
    ) {
        let kind = KINDS[k];
        match generate::<f64>(kind, n, p, seed) {
            Ok(a) => {
                let b = generate::<f64>(kind, n, p, seed).unwrap();
                prop_assert_eq!(&a, &b);
                let flagged = a.outlier_mask.iter().filter(|&&m| m).count();
                prop_assert_eq!(flagged, (p * n as f64).floor() as usize);
                for i in 0..n {
                    prop_assert_eq!(a.outlier_mask[i], a.jumps[i] != 0.0);
                    if kind == DgpKind::SinusoidalRegion && a.outlier_mask[i] {
                        prop_assert!((0.0..=1.0).contains(&a.t[i]));
                    }
                    if kind == DgpKind::SinusoidalAsymmetric && a.outlier_mask[i] {
                        prop_assert!(a.jumps[i] > 0.0);
                    }
                }
            }
            Err(AdrfError::InsufficientSupport(_)) => prop_assert_eq!(kind, DgpKind::SinusoidalRegion),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn folds_are_balanced_partitions(n in 10usize..500, k in 2usize..6, seed in 0u64..1000) {
        prop_assume!(n >= 5 * k);
        let fold = fold_assignment(n, k, seed).unwrap();
        let mut sizes = vec![0usize; k];
        for &f in &fold {
            prop_assert!((1..=k).contains(&f));
            sizes[f - 1] += 1;
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
        prop_assert_eq!(fold, fold_assignment(n, k, seed).unwrap());
    }
}

#[test]
fn fold_sizes_for_the_default_design() {
    let fold = fold_assignment(800, 3, 11).unwrap();
    let sizes: Vec<usize> = (1..=3).map(|f| fold.iter().filter(|&&x| x == f).count()).collect();
    assert_eq!(sizes, vec![267, 267, 266]);
}

#[test]
fn clean_residual_has_the_noise_scale() {
    for (seed, kind) in KINDS.into_iter().enumerate() {
        let ds = generate::<f64>(kind, 4000, 0.0, seed as u64).unwrap();
        let e: Vec<f64> = (0..ds.n())
            .map(|i| ds.y[i] - true_theta(kind, ds.t[i]) - confounder(kind, ds.x.row(i)))
            .collect();
        let m = e.iter().sum::<f64>() / e.len() as f64;
        let sd = (e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (e.len() - 1) as f64).sqrt();
        assert!((sd - NOISE_SD).abs() <= 0.05, "{kind}: sd {sd}");
    }
}

#[test]
fn symmetric_laws_have_balanced_signs() {
    for kind in [DgpKind::Sinusoidal, DgpKind::SinusoidalHeavytail, DgpKind::TFamily { nu: 3 }] {
        let ds = generate::<f64>(kind, 10_000, 0.3, 9).unwrap();
        let jumps: Vec<f64> = ds.jumps.iter().copied().filter(|&j| j != 0.0).collect();
        let pos = jumps.iter().filter(|&&j| j > 0.0).count() as f64 / jumps.len() as f64;
        assert!((pos - 0.5).abs() < 0.03, "{kind}: positive share {pos}");
    }
}

#[test]
fn out_of_fold_predictions_ignore_their_own_fold() {
    let ds = generate::<f64>(DgpKind::Sinusoidal, 300, 0.1, 4).unwrap();
    let ridge = LearnerKind::Ridge { lambda: 1.0 };
    let base = crossfit_arrays(&ds.x, &ds.t, &ds.y, &ds.outlier_mask, &ridge, 3, 4).unwrap();
    let mut poisoned = ds.y.clone();
    for i in 0..poisoned.len() {
        if base.fold_id[i] == 1 {
            poisoned[i] += 1e3 * (i as f64).sin();
        }
    }
    let res = crossfit_arrays(&ds.x, &ds.t, &poisoned, &ds.outlier_mask, &ridge, 3, 4).unwrap();
    for i in 0..poisoned.len() {
        let (before, after) = (ds.y[i] - base.y_tilde[i], poisoned[i] - res.y_tilde[i]);
        if base.fold_id[i] == 1 {
            assert!((before - after).abs() < 1e-9, "row {i}: {before} vs {after}");
        }
        assert_eq!(base.t_tilde[i], res.t_tilde[i]);
    }
}

#[test]
fn residuals_are_nearly_orthogonal_on_clean_linear_data() {
    let ds = generate::<f64>(DgpKind::Sinusoidal, 2000, 0.0, 21).unwrap();
    let res = crossfit_arrays(&ds.x, &ds.t, &ds.y, &ds.outlier_mask, &LearnerKind::Ridge { lambda: 1.0 }, 3, 21)
        .unwrap();
    let fitted: Vec<f64> = ds.y.iter().zip(&res.y_tilde).map(|(y, r)| y - r).collect();
    let r = corr(&res.t_tilde, &fitted);
    assert!(r.abs() < 0.05, "corr {r}");
}

#[test]
fn boosting_loss_never_increases() {
    for (seed, kind) in KINDS.into_iter().enumerate() {
        let Ok(ds) = generate::<f64>(kind, 500, 0.2, seed as u64) else { continue };
        let model = GbtModel::fit(&ds.x, &ds.y, &GbtParams::default()).unwrap();
        for w in model.loss_path.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{kind}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn lasso_satisfies_its_optimality_conditions() {
    let ds = generate::<f64>(DgpKind::Parabola, 600, 0.0, 8).unwrap();
    let lambda = 0.1;
    let m = LassoModel::fit(&ds.x, &ds.y, lambda).unwrap();
    let z = m.standardizer.transform(&ds.x);
    let n = ds.n() as f64;
    let r: Vec<f64> = (0..ds.n())
        .map(|i| ds.y[i] - m.intercept - z.row(i).iter().zip(&m.coef).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    for j in 0..z.ncols() {
        let g: f64 = (0..ds.n()).map(|i| z.get(i, j) * r[i]).sum::<f64>() / n;
        assert!(g.abs() <= lambda + 1e-5, "feature {j}: |gradient| {}", g.abs());
        if m.coef[j] != 0.0 {
            assert!((g - lambda * m.coef[j].signum()).abs() <= 1e-5, "feature {j}: gradient {g}");
        }
    }
}

#[test]
fn time_series_fit_matches_the_cross_sectional_fit_without_dependence() {
    let n = 800;
    let ts = TsConfig { folds: 3, buffer: 0, window: n, ..TsConfig::default() };
    let cfg = AdrfConfig::default();
    let (mut a, mut b) = (0.0, 0.0);
    for seed in 0..5 {
        let ds = generate_ts::<f64>(n, 0.0, 0.0, seed).unwrap();
        let est_ts = ts_fit(&ds, MethodKind::Shift, &ts, &cfg, seed).unwrap();
        let res = crossfit_arrays(&ds.x, &ds.t, &ds.y, &ds.outlier_mask, &ts.learner, 3, seed).unwrap();
        let est = fit_adrf(&res, MethodKind::Shift, &cfg).unwrap();
        let score = |e: &robust_adrf::adrf::AdrfEstimate<f64>| {
            let truth: Vec<f64> = e.grid.iter().map(|&t| true_theta(DgpKind::Sinusoidal, t)).collect();
            shape_metrics(&e.g_curve, &truth, &e.grid).unwrap().rmse_level
        };
        a += score(&est_ts) / 5.0;
        b += score(&est) / 5.0;
    }
    assert!((a - b).abs() <= 0.02, "time series {a} vs cross-sectional {b}");
}
