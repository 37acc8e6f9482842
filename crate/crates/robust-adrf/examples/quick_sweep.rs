//! Fits every method on a few seeds of each main DGP and prints mean metrics.

use robust_adrf::adrf::{fit_adrf, AdrfConfig, MethodKind};
use robust_adrf::dgp::{generate, true_theta, DgpKind};
use robust_adrf::metrics::{a5_failure_rate, detection_metrics, shape_metrics};
use robust_adrf::nuisance::{crossfit_residualize, LearnerKind};

fn main() -> robust_adrf::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let cfg = AdrfConfig::default();
    for kind in DgpKind::MAIN {
        for p in [0.0, 0.25] {
            let mut rows = vec![(0.0, 0.0, 0usize); MethodKind::ALL.len()];
            let mut a5 = 0.0;
            for seed in 0..seeds {
                let Ok(ds) = generate::<f64>(kind, 800, p, seed) else { continue };
                let res = crossfit_residualize(&ds, &LearnerKind::default(), 3, seed)?;
                for (m, method) in MethodKind::ALL.into_iter().enumerate() {
                    let est = fit_adrf(&res, method, &cfg)?;
                    let truth: Vec<f64> = est.grid.iter().map(|&t| true_theta(kind, t)).collect();
                    let sm = shape_metrics(&est.g_curve, &truth, &est.grid)?;
                    let det = detection_metrics(&est.sample_scores, &ds.outlier_mask, p)?;
                    rows[m].0 += sm.rmse_level;
                    rows[m].1 += det.f1;
                    rows[m].2 += 1;
                    if m == 0 {
                        a5 += a5_failure_rate(&ds.t, &ds.outlier_mask, &est.grid, est.bandwidth)?;
                    }
                }
            }
            let cnt = rows[0].2.max(1) as f64;
            print!("{kind:<24} p={p:<4} a5={:.3} |", a5 / cnt);
            for (m, r) in MethodKind::ALL.iter().zip(&rows) {
                print!(" {}={:.3}/{:.2}", m, r.0 / cnt, r.1 / cnt);
            }
            println!();
        }
    }
    Ok(())
}
