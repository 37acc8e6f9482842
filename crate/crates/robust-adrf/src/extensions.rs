//! Binary-treatment robust X-learner and the time-series dose-response variant.

use rayon::prelude::*;

use crate::adrf::{fit_adrf, AdrfConfig, AdrfEstimate, AnchorRule, MethodKind};
use crate::dgp::{BinaryDataset, TimeSeriesDataset};
use crate::error::{invalid, Result};
use crate::linalg::{weighted_least_squares, Matrix};
use crate::nuisance::{block_crossfit_residualize, fold_assignment, GbtParams, LearnerKind, Regressor, Standardizer};
use crate::scalar::Scalar;
use crate::smoothers::huber_irls;

/// X-learner settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RxConfig {
    pub folds: usize,
    pub outcome_model: GbtParams,
    pub huber_eps: f64,
    /// Add squared covariates to the effect regressions.
    pub quadratic_features: bool,
    pub logistic_l2: f64,
    /// Replace the fitted propensity with a constant.
    pub fixed_propensity: Option<f64>,
}

impl Default for RxConfig {
    fn default() -> Self {
        Self {
            folds: 3,
            outcome_model: GbtParams::default(),
            huber_eps: 1.35,
            quadratic_features: true,
            logistic_l2: 1e-4,
            fixed_propensity: None,
        }
    }
}

/// Conditional-effect estimate of the X-learner.
#[derive(Debug, Clone, PartialEq)]
pub struct CateEstimate<S> {
    pub tau_hat: Vec<S>,
    /// Effect regression fitted on control pseudo-outcomes.
    pub tau0_hat: Vec<S>,
    /// Effect regression fitted on treated pseudo-outcomes.
    pub tau1_hat: Vec<S>,
    pub propensity: Vec<S>,
    pub rmse_vs_truth: S,
    pub robust: bool,
}

/// Logistic regression by gradient ascent on the L2-penalized mean log-likelihood,
/// using standardized covariates. Returns fitted probabilities.
pub fn logistic_propensity<S: Scalar>(x: &Matrix<S>, d: &[bool], l2: f64) -> Result<Vec<S>> {
    let n = x.nrows();
    if d.len() != n || n == 0 {
        return Err(invalid("propensity inputs differ in length"));
    }
    let st = Standardizer::fit(x);
    let z = st.transform(x);
    let z: Vec<Vec<f64>> = (0..n).map(|i| z.row(i).iter().map(|v| v.as_f64()).collect()).collect();
    let p = x.ncols();
    let mut beta = vec![0.0; p + 1];
    let rate = 0.5;
    let linear = |b: &[f64], row: &[f64]| b[0] + row.iter().zip(&b[1..]).map(|(a, c)| a * c).sum::<f64>();
    for _ in 0..5000 {
        let mut grad = vec![0.0; p + 1];
        for (row, &di) in z.iter().zip(d) {
            let e = 1.0 / (1.0 + (-linear(&beta, row)).exp());
            let r = f64::from(u8::from(di)) - e;
            grad[0] += r;
            for (g, &v) in grad[1..].iter_mut().zip(row) {
                *g += r * v;
            }
        }
        let mut moved = 0.0f64;
        for (j, (b, g)) in beta.iter_mut().zip(&grad).enumerate() {
            let pen = if j == 0 { 0.0 } else { l2 * *b };
            let step = rate * (g / n as f64 - pen);
            *b += step;
            moved = moved.max(step.abs());
        }
        if moved < 1e-10 {
            break;
        }
    }
    Ok(z.iter().map(|row| S::lit(1.0 / (1.0 + (-linear(&beta, row)).exp()))).collect())
}

fn effect_design<S: Scalar>(x: &Matrix<S>, quadratic: bool) -> Result<Matrix<S>> {
    let (n, p) = (x.nrows(), x.ncols());
    let width = 1 + p * if quadratic { 2 } else { 1 };
    let mut data = Vec::with_capacity(n * width);
    for i in 0..n {
        let row = x.row(i);
        data.push(S::one());
        data.extend_from_slice(row);
        if quadratic {
            data.extend(row.iter().map(|&v| v * v));
        }
    }
    Matrix::new(n, width, data)
}

fn predict_linear<S: Scalar>(design: &Matrix<S>, beta: &[S]) -> Vec<S> {
    (0..design.nrows()).map(|i| design.row(i).iter().zip(beta).map(|(&a, &b)| a * b).sum()).collect()
}

/// Cross-fitted X-learner. Outcome models are boosted trees per arm; effect
/// regressions are linear (Huber IRLS when `robust`, OLS otherwise).
pub fn rxlearner_fit<S: Scalar>(ds: &BinaryDataset<S>, robust: bool, cfg: &RxConfig, seed: u64) -> Result<CateEstimate<S>> {
    let n = ds.y.len();
    let treated = ds.treat.iter().filter(|&&d| d).count();
    if treated == 0 || treated == n {
        return Err(invalid("both treatment arms must be non-empty"));
    }
    let fold = fold_assignment(n, cfg.folds, seed)?;
    let learner = LearnerKind::Gbt(cfg.outcome_model);
    let jobs: Vec<(usize, bool)> = (1..=cfg.folds).flat_map(|f| [(f, false), (f, true)]).collect();
    let preds: Vec<Result<(usize, bool, Vec<usize>, Vec<S>)>> = jobs
        .par_iter()
        .map(|&(f, arm)| {
            let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f && ds.treat[i] == arm).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
            if train.len() < 2 {
                return Err(invalid(format!("fold {f} has fewer than two training samples in one arm")));
            }
            let y: Vec<S> = train.iter().map(|&i| ds.y[i]).collect();
            let p = learner.fit_predict(&ds.x.select_rows(&train), &y, &ds.x.select_rows(&test))?;
            Ok((f, arm, test, p))
        })
        .collect();
    let mut m0 = vec![S::zero(); n];
    let mut m1 = vec![S::zero(); n];
    for r in preds {
        let (_, arm, test, p) = r?;
        let target = if arm { &mut m1 } else { &mut m0 };
        for (i, v) in test.into_iter().zip(p) {
            target[i] = v;
        }
    }
    let propensity = match cfg.fixed_propensity {
        Some(e) if (0.0..=1.0).contains(&e) => vec![S::lit(e); n],
        Some(e) => return Err(invalid(format!("propensity {e} outside [0, 1]"))),
        None => logistic_propensity(&ds.x, &ds.treat, cfg.logistic_l2)?,
    };
    let design = effect_design(&ds.x, cfg.quadratic_features)?;
    let fit_arm = |arm: bool| -> Result<Vec<S>> {
        let idx: Vec<usize> = (0..n).filter(|&i| ds.treat[i] == arm).collect();
        let pseudo: Vec<S> =
            idx.iter().map(|&i| if arm { ds.y[i] - m0[i] } else { m1[i] - ds.y[i] }).collect();
        let sub = design.select_rows(&idx);
        let ones = vec![S::one(); idx.len()];
        let beta = if robust {
            huber_irls(&sub, &pseudo, &ones, cfg.huber_eps, 1e-8, 100)?.beta
        } else {
            weighted_least_squares(&sub, &pseudo, &ones)?
        };
        Ok(predict_linear(&design, &beta))
    };
    let tau0_hat = fit_arm(false)?;
    let tau1_hat = fit_arm(true)?;
    let tau_hat: Vec<S> = (0..n)
        .map(|i| propensity[i] * tau0_hat[i] + (S::one() - propensity[i]) * tau1_hat[i])
        .collect();
    let sq: S = tau_hat.iter().zip(&ds.true_tau).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(CateEstimate {
        rmse_vs_truth: (sq / S::from_count(n)).sqrt(),
        tau_hat,
        tau0_hat,
        tau1_hat,
        propensity,
        robust,
    })
}

/// Time-series settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TsConfig {
    pub folds: usize,
    pub buffer: usize,
    /// Rolling MAD width (most recent window members).
    pub window: usize,
    pub learner: LearnerKind,
}

impl Default for TsConfig {
    fn default() -> Self {
        Self { folds: 5, buffer: 5, window: 50, learner: LearnerKind::default() }
    }
}

/// Block cross-fitted residualization followed by the curve fit, with the annealing
/// anchored to the MAD of the `window` most recent window members.
pub fn ts_fit<S: Scalar>(
    ds: &TimeSeriesDataset<S>,
    method: MethodKind,
    ts: &TsConfig,
    cfg: &AdrfConfig,
    seed: u64,
) -> Result<AdrfEstimate<S>> {
    if ts.window < 10 {
        return Err(invalid(format!("rolling window {} below the minimum of 10", ts.window)));
    }
    let res = block_crossfit_residualize(ds, &ts.learner, ts.folds, ts.buffer, seed)?;
    let cfg = AdrfConfig { anchor: AnchorRule::RecentMad { w: ts.window }, ..cfg.clone() };
    fit_adrf(&res, method, &cfg)
}
