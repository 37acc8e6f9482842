use proptest::prelude::*;
use robust_adrf::adrf::{fit_adrf, interpolate_undefined, make_grid, AdrfConfig, MethodKind};
use robust_adrf::dgp::{generate, DgpKind};
use robust_adrf::metrics::{a5_failure_rate, detection_metrics, matched_k_flags, rank_curves, shape_metrics};
use robust_adrf::nuisance::{crossfit_residualize, LearnerKind};
use robust_adrf::smoothers::silverman_bandwidth;
use robust_adrf::stats::mean;

fn ridge() -> LearnerKind {
    LearnerKind::Ridge { lambda: 1.0 }
}

#[test]
fn anchoring_identity_holds_for_every_method() {
    for (seed, kind) in DgpKind::MAIN.into_iter().enumerate() {
        let ds = generate::<f64>(kind, 400, 0.1, seed as u64).unwrap();
        let res = crossfit_residualize(&ds, &ridge(), 3, seed as u64).unwrap();
        for m in MethodKind::ALL {
            let est = fit_adrf(&res, m, &AdrfConfig::default()).unwrap();
            let gap = (mean(&est.g_curve) - mean(&est.intercepts)).abs();
            assert!(gap <= 1e-9, "{kind} {m}: {gap}");
        }
    }
}

#[test]
fn uniform_weight_flag_follows_the_method_family() {
    let ds = generate::<f64>(DgpKind::Sinusoidal, 300, 0.1, 5).unwrap();
    let res = crossfit_residualize(&ds, &ridge(), 3, 5).unwrap();
    for m in MethodKind::ALL {
        let est = fit_adrf(&res, m, &AdrfConfig::default()).unwrap();
        let expected = matches!(m, MethodKind::NaiveLl | MethodKind::StandardDml | MethodKind::HuberDml | MethodKind::QuantileDml);
        assert_eq!(est.uniform_weights, expected, "{m}");
        assert_eq!(m.is_uniform(), expected, "{m}");
        if expected {
            assert!(est.sample_scores.iter().all(|&s| s == 1.0), "{m}");
        }
        assert!(est.weight_matrix.as_slice().iter().all(|&w| w > 0.0 && w <= 1.0), "{m}");
    }
}

fn curve(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let g = values.len();
    let grid: Vec<f64> = (0..g).map(|i| i as f64 / (g - 1) as f64).collect();
    let truth: Vec<f64> = grid.iter().map(|&t| (3.0 * t).sin() + t * t).collect();
    (grid, truth)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn shape_metrics_ignore_level_shifts_and_joint_sign(
        est in prop::collection::vec(-3.0f64..3.0, 5..40),
        c in -100.0f64..100.0,
        d in -100.0f64..100.0,
    ) {
        let (grid, truth) = curve(&est);
        let base = shape_metrics(&est, &truth, &grid).unwrap();
        let shifted: Vec<f64> = est.iter().map(|v| v + c).collect();
        let truth_shifted: Vec<f64> = truth.iter().map(|v| v + d).collect();
        let moved = shape_metrics(&shifted, &truth_shifted, &grid).unwrap();
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let flipped = shape_metrics(&neg(&est), &neg(&truth), &grid).unwrap();
        for other in [moved, flipped] {
            prop_assert!((other.rmse_level - base.rmse_level).abs() <= 1e-9);
            prop_assert!((other.mae_level - base.mae_level).abs() <= 1e-9);
            prop_assert!((other.sup_err - base.sup_err).abs() <= 1e-9);
            prop_assert!((other.mase_deriv - base.mase_deriv).abs() <= 1e-9);
        }
        prop_assert!(base.rmse_level >= base.mae_level - 1e-12);
        prop_assert!(base.sup_err >= base.rmse_level - 1e-12);
    }

    #[test]
    fn roc_auc_is_invariant_under_monotone_maps(
        scores in prop::collection::vec(-5.0f64..5.0, 10..80),
        flags in prop::collection::vec(any::<bool>(), 80),
        a in 0.1f64..10.0,
        b in -10.0f64..10.0,
    ) {
        let mask = &flags[..scores.len()];
        prop_assume!(mask.iter().any(|&m| m) && mask.iter().any(|&m| !m));
        let (roc, ap) = rank_curves(&scores, mask).unwrap();
        for mapped in [
            scores.iter().map(|s| a * s + b).collect::<Vec<_>>(),
            scores.iter().map(|s| s.exp()).collect(),
            scores.iter().map(|s| s * s * s).collect(),
        ] {
            let (r2, ap2) = rank_curves(&mapped, mask).unwrap();
            prop_assert!((roc - r2).abs() <= 1e-12);
            prop_assert!((ap - ap2).abs() <= 1e-12);
        }
        prop_assert!((0.0..=1.0).contains(&roc));
    }

    #[test]
    fn matched_k_flags_exactly_floor_pn(
        scores in prop::collection::vec(prop_oneof![Just(0.5), Just(1.0), 0.0f64..1.0], 1..200),
        p in 0.0f64..0.5,
    ) {
        let flags = matched_k_flags(&scores, p).unwrap();
        let k = (p * scores.len() as f64 + 1e-9).floor() as usize;
        prop_assert_eq!(flags.iter().filter(|&&f| f).count(), k);
        let mask = vec![false; scores.len()];
        prop_assert_eq!(detection_metrics(&scores, &mask, p).unwrap().k, k);
    }

    #[test]
    fn a5_rate_grows_with_the_outlier_set(
        t in prop::collection::vec(-2.0f64..2.0, 60..150),
        base in prop::collection::vec(prop::bool::weighted(0.2), 150),
        extra in prop::collection::vec(prop::bool::weighted(0.2), 150),
    ) {
        let n = t.len();
        let small = &base[..n];
        let large: Vec<bool> = small.iter().zip(&extra).map(|(&a, &b)| a || b).collect();
        let grid = make_grid(&t, 20).unwrap();
        let h = silverman_bandwidth(&t).unwrap();
        let a = a5_failure_rate(&t, small, &grid, h).unwrap();
        let b = a5_failure_rate(&t, &large, &grid, h).unwrap();
        prop_assert!(a <= b);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn interpolation_stays_between_defined_neighbours(
        values in prop::collection::vec(-10.0f64..10.0, 3..30),
        defined in prop::collection::vec(any::<bool>(), 30),
    ) {
        let g = values.len();
        let defined = &defined[..g];
        prop_assume!(defined.iter().any(|&d| d));
        let grid: Vec<f64> = (0..g).map(|i| i as f64 * 0.3).collect();
        let mut out = values.clone();
        interpolate_undefined(&mut out, defined, &grid).unwrap();
        let known: Vec<usize> = (0..g).filter(|&i| defined[i]).collect();
        for i in 0..g {
            if defined[i] {
                prop_assert_eq!(out[i], values[i]);
                continue;
            }
            let left = known.iter().rev().find(|&&k| k < i).copied();
            let right = known.iter().find(|&&k| k > i).copied();
            match (left, right) {
                (Some(l), Some(r)) => {
                    let (lo, hi) = (values[l].min(values[r]), values[l].max(values[r]));
                    prop_assert!(out[i] >= lo - 1e-12 && out[i] <= hi + 1e-12);
                }
                (Some(l), None) => prop_assert_eq!(out[i], values[l]),
                (None, Some(r)) => prop_assert_eq!(out[i], values[r]),
                (None, None) => unreachable!(),
            }
        }
    }

    #[test]
    fn grid_is_strictly_ascending(t in prop::collection::vec(-5.0f64..5.0, 20..200), g in 2usize..60) {
        let grid = make_grid(&t, g).unwrap();
        prop_assert_eq!(grid.len(), g);
        prop_assert!(grid.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn region_a5_rate_is_monotone_in_contamination() {
    let mut checked = 0;
    for seed in 0..20u64 {
        let rates: Option<Vec<f64>> = [0.05, 0.15, 0.25]
            .iter()
            .map(|&p| {
                let ds = generate::<f64>(DgpKind::SinusoidalRegion, 800, p, seed).ok()?;
                let grid = make_grid(&ds.t, 40).ok()?;
                let h = silverman_bandwidth(&ds.t).ok()?;
                a5_failure_rate(&ds.t, &ds.outlier_mask, &grid, h).ok()
            })
            .collect();
        // Seeds without enough support for the largest fraction cannot be compared.
        let Some(r) = rates else { continue };
        checked += 1;
        assert!(r[0] <= r[1] && r[1] <= r[2], "seed {seed}: {r:?}");
    }
    assert!(checked >= 5, "only {checked} seeds had enough region support");
}

#[test]
fn single_precision_tracks_double_precision() {
    let rmse = |est: &[f64], grid: &[f64]| {
        let truth: Vec<f64> = grid.iter().map(|&t| robust_adrf::dgp::true_theta(DgpKind::Sinusoidal, t)).collect();
        shape_metrics(est, &truth, grid).unwrap().rmse_level
    };
    let d64 = generate::<f64>(DgpKind::Sinusoidal, 600, 0.15, 3).unwrap();
    let d32 = generate::<f32>(DgpKind::Sinusoidal, 600, 0.15, 3).unwrap();
    assert_eq!(d64.outlier_mask, d32.outlier_mask);
    let e64 = fit_adrf(&crossfit_residualize(&d64, &ridge(), 3, 3).unwrap(), MethodKind::Shift, &AdrfConfig::default()).unwrap();
    let e32 = fit_adrf(&crossfit_residualize(&d32, &ridge(), 3, 3).unwrap(), MethodKind::Shift, &AdrfConfig::default()).unwrap();
    let widen = |v: &[f32]| v.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>();
    let (r64, r32) = (rmse(&e64.g_curve, &e64.grid), rmse(&widen(&e32.g_curve), &widen(&e32.grid)));
    assert!((r64 - r32).abs() < 0.01, "f64 {r64} vs f32 {r32}");
}
