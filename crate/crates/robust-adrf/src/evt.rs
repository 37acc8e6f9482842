//! Extreme-value diagnostics of residual tails: tail-index and GPD/GEV fits, mean
//! excess and threshold-stability curves, return levels with bootstrap intervals,
//! the causal tail coefficient, and the tail-driven estimator choice.

use rand::Rng as _;
use rayon::prelude::*;

use crate::adrf::MethodKind;
use crate::error::{degenerate, invalid, AdrfError, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::rng;
use crate::scalar::Scalar;
use crate::stats;

/// Below this |xi| the exponential limit formulas are used.
pub const XI_BRANCH_CUT: f64 = 1e-6;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn to_f64<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn noted<T>(r: Result<T>, name: &str, note: &mut impl FnMut(&str, AdrfError)) -> Option<T> {
    r.map_err(|e| note(name, e)).ok()
}

fn check_all_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(AdrfError::NonFinite(what.into()))
    }
}

/// Hill tail index from the top `floor(k_frac n)` order statistics.
pub fn hill<S: Scalar>(values: &[S], k_frac: f64) -> Result<f64> {
    if values.len() < 20 {
        return Err(invalid("Hill needs at least 20 values"));
    }
    if !(k_frac > 0.0 && k_frac < 0.5) {
        return Err(invalid("k_frac must lie in (0, 0.5)"));
    }
    let mut x = to_f64(values);
    check_all_finite(&x, "Hill input")?;
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let k = (k_frac * n as f64).floor() as usize;
    if k == 0 {
        return Err(invalid("k_frac * n rounds to zero"));
    }
    let base = x[n - k - 1];
    if !(base > 0.0) {
        return Err(invalid("Hill needs positive values in the top-k region"));
    }
    let s: f64 = x[n - k..].iter().map(|&v| (v / base).ln()).sum();
    if !(s > 0.0) {
        return Err(degenerate("top order statistics are all equal"));
    }
    Ok(k as f64 / s)
}

/// Generalized Pareto shape and scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdFit {
    pub xi: f64,
    pub sigma: f64,
}

fn check_excesses(x: &[f64]) -> Result<()> {
    if x.len() < 30 {
        return Err(invalid(format!("{} excesses; at least 30 are required", x.len())));
    }
    check_all_finite(x, "excesses")?;
    if x.iter().any(|&v| v < 0.0) {
        return Err(invalid("excesses must be non-negative"));
    }
    Ok(())
}

/// Probability-weighted-moment GPD estimates.
pub fn gpd_fit_pwm<S: Scalar>(excesses: &[S]) -> Result<GpdFit> {
    let mut x = to_f64(excesses);
    check_excesses(&x)?;
    x.sort_by(f64::total_cmp);
    pwm_sorted(&x)
}

fn pwm_sorted(x: &[f64]) -> Result<GpdFit> {
    let n = x.len() as f64;
    let b0 = x.iter().sum::<f64>() / n;
    let b1 = x.iter().enumerate().map(|(i, &v)| (n - 1.0 - i as f64) / (n - 1.0) * v).sum::<f64>() / n;
    let den = b0 - 2.0 * b1;
    if den.abs() <= f64::EPSILON * b0.abs().max(1e-300) {
        return Err(degenerate("PWM moments are degenerate (b0 = 2 b1)"));
    }
    Ok(GpdFit { xi: 2.0 - b0 / den, sigma: 2.0 * b0 * b1 / den })
}

fn gpd_nll(x: &[f64], log_sigma: f64, xi: f64) -> f64 {
    if xi <= -1.0 || !log_sigma.is_finite() {
        return f64::INFINITY;
    }
    let sigma = log_sigma.exp();
    let n = x.len() as f64;
    if xi.abs() < 1e-10 {
        return n * log_sigma + x.iter().sum::<f64>() / sigma;
    }
    let mut acc = 0.0;
    for &v in x {
        let z = 1.0 + xi * v / sigma;
        if z <= 0.0 {
            return f64::INFINITY;
        }
        acc += z.ln();
    }
    n * log_sigma + (1.0 + 1.0 / xi) * acc
}

fn optimizer_options() -> NelderMeadOptions {
    NelderMeadOptions { f_tol: 1e-8, x_tol: 1e-7, max_iter: 4000 }
}

/// Maximum-likelihood GPD fit on `(log sigma, xi)` with `xi > -1`, started from the
/// PWM estimate. On failure the error carries the PWM fit as a fallback.
pub fn gpd_fit_mle<S: Scalar>(excesses: &[S]) -> Result<GpdFit> {
    let mut x = to_f64(excesses);
    check_excesses(&x)?;
    x.sort_by(f64::total_cmp);
    mle_sorted(&x)
}

fn mle_sorted(x: &[f64]) -> Result<GpdFit> {
    let pwm = pwm_sorted(x)?;
    let fallback = Some(vec![pwm.xi, pwm.sigma]);
    let xmax = *x.last().expect("non-empty");
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let xi0 = if pwm.xi.is_finite() { pwm.xi.clamp(-0.9, 2.0) } else { 0.1 };
    let mut sigma0 = if pwm.sigma.is_finite() && pwm.sigma > 0.0 { pwm.sigma } else { mean.max(1e-12) };
    if xi0 < 0.0 && 1.0 + xi0 * xmax / sigma0 <= 0.0 {
        sigma0 = -xi0 * xmax * 1.05;
    }
    let f = |p: &[f64]| gpd_nll(x, p[0], p[1]);
    let starts = [[sigma0.ln(), xi0], [mean.max(1e-12).ln(), 0.0]];
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for s in starts {
        let Ok(m) = nelder_mead(f, &s, &[0.2, 0.1], &optimizer_options()) else { continue };
        if best.as_ref().is_none_or(|b| m.value < b.0) {
            best = Some((m.value, m.x, m.converged));
        }
    }
    match best {
        Some((v, p, true)) if v.is_finite() => Ok(GpdFit { xi: p[1], sigma: p[0].exp() }),
        _ => Err(AdrfError::Optimizer { message: "GPD likelihood search did not converge".into(), fallback }),
    }
}

/// Generalized extreme-value fit to block maxima.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevFit {
    pub xi: f64,
    pub sigma: f64,
    pub mu: f64,
}

fn gev_nll(m: &[f64], mu: f64, log_sigma: f64, xi: f64) -> f64 {
    if !log_sigma.is_finite() || xi <= -1.0 {
        return f64::INFINITY;
    }
    let sigma = log_sigma.exp();
    let mut acc = m.len() as f64 * log_sigma;
    for &v in m {
        let z = (v - mu) / sigma;
        if xi.abs() < 1e-10 {
            acc += z + (-z).exp();
        } else {
            let s = 1.0 + xi * z;
            if s <= 0.0 {
                return f64::INFINITY;
            }
            acc += (1.0 + 1.0 / xi) * s.ln() + s.powf(-1.0 / xi);
        }
    }
    acc
}

/// Maxima of `blocks` contiguous blocks of `floor(n / blocks)` values.
pub fn block_maxima(values: &[f64], blocks: usize) -> Result<Vec<f64>> {
    if blocks == 0 || values.len() < 2 * blocks {
        return Err(invalid(format!("{} values cannot fill {blocks} blocks of two", values.len())));
    }
    let size = values.len() / blocks;
    Ok((0..blocks).map(|b| values[b * size..(b + 1) * size].iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect())
}

/// GEV maximum likelihood on block maxima, started from Gumbel moment estimates.
pub fn gev_fit<S: Scalar>(values: &[S], blocks: usize) -> Result<GevFit> {
    let x = to_f64(values);
    check_all_finite(&x, "GEV input")?;
    let m = block_maxima(&x, blocks)?;
    gev_fit_maxima(&m)
}

fn gev_fit_maxima(m: &[f64]) -> Result<GevFit> {
    let sd = stats::std_dev(m);
    if !(sd > 0.0) {
        return Err(degenerate("block maxima are constant"));
    }
    let sigma0 = 6f64.sqrt() * sd / std::f64::consts::PI;
    let mu0 = stats::mean(m) - EULER_GAMMA * sigma0;
    let f = |p: &[f64]| gev_nll(m, p[0], p[1], p[2]);
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for xi0 in [0.1, -0.1] {
        let Ok(r) = nelder_mead(f, &[mu0, sigma0.ln(), xi0], &[0.2 * sigma0, 0.2, 0.1], &optimizer_options()) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| r.value < b.0) {
            best = Some((r.value, r.x, r.converged));
        }
    }
    match best {
        Some((v, p, true)) if v.is_finite() => Ok(GevFit { mu: p[0], sigma: p[1].exp(), xi: p[2] }),
        _ => Err(AdrfError::Optimizer { message: "GEV likelihood search did not converge".into(), fallback: None }),
    }
}

fn excess_thresholds(sorted: &[f64], points: usize) -> Result<Vec<f64>> {
    if sorted.len() < 50 {
        return Err(invalid("at least 50 values are required"));
    }
    if points < 2 {
        return Err(invalid("at least two thresholds are required"));
    }
    stats::linspace(0.5, 0.98, points).into_iter().map(|q| stats::quantile_sorted(sorted, q)).collect()
}

/// Mean excess `e(u)` at `points` thresholds between the 50% and 98% quantiles;
/// thresholds with fewer than 10 exceedances are dropped.
pub fn mean_excess<S: Scalar>(values: &[S], points: usize) -> Result<Vec<(f64, f64)>> {
    let mut x = to_f64(values);
    check_all_finite(&x, "mean-excess input")?;
    x.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for u in excess_thresholds(&x, points)? {
        let over = &x[x.partition_point(|&v| v <= u)..];
        if over.len() >= 10 {
            out.push((u, over.iter().map(|&v| v - u).sum::<f64>() / over.len() as f64));
        }
    }
    Ok(out)
}

/// GPD shape and modified scale fitted above one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityPoint {
    pub threshold: f64,
    pub exceedances: usize,
    /// `None` when there are fewer than 30 excesses or the fit failed.
    pub fit: Option<(f64, f64)>,
}

/// Threshold-stability curves `xi(u)` and `sigma(u) - xi(u) u`.
pub fn parameter_stability<S: Scalar>(values: &[S], points: usize) -> Result<Vec<StabilityPoint>> {
    let mut x = to_f64(values);
    check_all_finite(&x, "stability input")?;
    x.sort_by(f64::total_cmp);
    let thresholds = excess_thresholds(&x, points)?;
    Ok(thresholds
        .par_iter()
        .map(|&u| {
            let exc: Vec<f64> = x[x.partition_point(|&v| v <= u)..].iter().map(|&v| v - u).collect();
            let fit = if exc.len() >= 30 { mle_sorted(&exc).ok().map(|g| (g.xi, g.sigma - g.xi * u)) } else { None };
            StabilityPoint { threshold: u, exceedances: exc.len(), fit }
        })
        .collect())
}

/// Return level for exceedance probability `p` from a GPD fitted above `u`.
pub fn return_level(gpd: GpdFit, u: f64, n: usize, n_u: usize, p: f64) -> Result<f64> {
    if n == 0 || n_u == 0 || n_u > n {
        return Err(invalid("need 0 < n_u <= n"));
    }
    let rate = n_u as f64 / n as f64;
    if !(p > 0.0 && p <= rate) {
        return Err(invalid(format!("exceedance probability {p} outside (0, {rate}]")));
    }
    if !(gpd.sigma > 0.0) {
        return Err(invalid("GPD scale must be positive"));
    }
    let r = rate / p;
    Ok(if gpd.xi.abs() < XI_BRANCH_CUT { u + gpd.sigma * r.ln() } else { u + gpd.sigma / gpd.xi * (r.powf(gpd.xi) - 1.0) })
}

/// Return level with a parametric-bootstrap percentile interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnLevel {
    pub prob: f64,
    pub level: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Inverse GPD CDF.
pub fn gpd_quantile(gpd: GpdFit, q: f64) -> f64 {
    if gpd.xi.abs() < XI_BRANCH_CUT {
        -gpd.sigma * (1.0 - q).ln()
    } else {
        gpd.sigma / gpd.xi * ((1.0 - q).powf(-gpd.xi) - 1.0)
    }
}

/// Return levels at each probability with 95% intervals from `b` parametric
/// resamples of `n_u` excesses, each refitted by maximum likelihood (PWM when the
/// likelihood search fails).
pub fn return_levels(
    gpd: GpdFit,
    u: f64,
    n: usize,
    n_u: usize,
    probs: &[f64],
    b: usize,
    seed: u64,
) -> Result<Vec<ReturnLevel>> {
    if b < 2 {
        return Err(invalid("bootstrap needs at least two resamples"));
    }
    if n_u < 30 {
        return Err(invalid("bootstrap refits need at least 30 excesses"));
    }
    let point: Vec<f64> = probs.iter().map(|&p| return_level(gpd, u, n, n_u, p)).collect::<Result<_>>()?;
    let draws: Vec<Option<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(seed, "return_level_bootstrap", r as u64);
            let mut sample: Vec<f64> = (0..n_u).map(|_| gpd_quantile(gpd, g.random::<f64>())).collect();
            sample.sort_by(f64::total_cmp);
            let fit = mle_sorted(&sample).or_else(|_| pwm_sorted(&sample)).ok()?;
            probs.iter().map(|&p| return_level(fit, u, n, n_u, p).ok()).collect()
        })
        .collect();
    let ok: Vec<Vec<f64>> = draws.into_iter().flatten().filter(|v| v.iter().all(|x| x.is_finite())).collect();
    if ok.len() < 2 {
        return Err(degenerate("too few bootstrap refits succeeded"));
    }
    Ok(probs
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let mut col: Vec<f64> = ok.iter().map(|v| v[j]).collect();
            col.sort_by(f64::total_cmp);
            ReturnLevel {
                prob: p,
                level: point[j],
                ci_low: stats::quantile_sorted(&col, 0.025).unwrap_or(f64::NAN),
                ci_high: stats::quantile_sorted(&col, 0.975).unwrap_or(f64::NAN),
            }
        })
        .collect())
}

/// Which GPD estimator a bootstrap refit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GpdEstimator {
    Mle,
    Pwm,
}

/// 95% percentile interval of the GPD shape from `b` parametric resamples of size
/// `n_u`, each refitted with `estimator`.
pub fn shape_interval(gpd: GpdFit, n_u: usize, estimator: GpdEstimator, b: usize, seed: u64) -> Result<(f64, f64)> {
    if b < 2 || n_u < 30 {
        return Err(invalid("shape interval needs b >= 2 resamples of at least 30 excesses"));
    }
    let purpose = match estimator {
        GpdEstimator::Mle => "shape_bootstrap_mle",
        GpdEstimator::Pwm => "shape_bootstrap_pwm",
    };
    let mut xs: Vec<f64> = (0..b)
        .into_par_iter()
        .filter_map(|r| {
            let mut g = rng::stream(seed, purpose, r as u64);
            let mut sample: Vec<f64> = (0..n_u).map(|_| gpd_quantile(gpd, g.random::<f64>())).collect();
            sample.sort_by(f64::total_cmp);
            let fit = match estimator {
                GpdEstimator::Mle => mle_sorted(&sample),
                GpdEstimator::Pwm => pwm_sorted(&sample),
            };
            fit.ok().map(|f| f.xi).filter(|v| v.is_finite())
        })
        .collect();
    if xs.len() < 2 {
        return Err(degenerate("too few bootstrap refits succeeded"));
    }
    xs.sort_by(f64::total_cmp);
    Ok((stats::quantile_sorted(&xs, 0.025)?, stats::quantile_sorted(&xs, 0.975)?))
}

/// Asymptotic 95% interval of the Hill index, `alpha (1 +- 1.96 / sqrt(k))`.
pub fn hill_interval(alpha: f64, k: usize) -> Result<(f64, f64)> {
    if k == 0 || !alpha.is_finite() {
        return Err(invalid("Hill interval needs k >= 1 and a finite index"));
    }
    let half = 1.96 * alpha / (k as f64).sqrt();
    Ok((alpha - half, alpha + half))
}

/// Shape implied by the least-squares slope `s` of the mean-excess curve,
/// `xi = s / (1 + s)`.
pub fn mean_excess_shape(curve: &[(f64, f64)]) -> Result<f64> {
    if curve.len() < 3 {
        return Err(invalid("mean-excess shape needs at least three points"));
    }
    let m = curve.len() as f64;
    let mu = curve.iter().map(|p| p.0).sum::<f64>() / m;
    let me = curve.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = curve.iter().map(|p| (p.0 - mu).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(degenerate("mean-excess thresholds coincide"));
    }
    let s = curve.iter().map(|p| (p.0 - mu) * (p.1 - me)).sum::<f64>() / sxx;
    if s <= -1.0 {
        return Err(degenerate("mean-excess slope at or below -1"));
    }
    Ok(s / (1.0 + s))
}

/// Reading of the causal tail coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TailCoefficientForm {
    /// Mean empirical CDF of `y` over the top-k `x` samples; 0.5 under independence.
    #[default]
    Expectation,
    /// Share of the top-k `x` samples whose `y` is also top-k; 0 in the independent limit.
    JointExceedance,
}

/// Empirical CDF values `#{v_j <= v_i} / n`.
fn ecdf(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().map(|&x| s.partition_point(|&w| w <= x) as f64 / n).collect()
}

/// Causal tail coefficient of `x` on `y` with `k = floor(k_frac n)` extremes of `x`.
pub fn causal_tail_coefficient<S: Scalar>(x: &[S], y: &[S], k_frac: f64, form: TailCoefficientForm) -> Result<f64> {
    if x.len() != y.len() || x.len() < 50 {
        return Err(invalid("tail coefficient needs equal-length inputs of length >= 50"));
    }
    let (xf, yf) = (to_f64(x), to_f64(y));
    check_all_finite(&xf, "tail coefficient x")?;
    check_all_finite(&yf, "tail coefficient y")?;
    let n = xf.len();
    let k = (k_frac * n as f64).floor() as usize;
    if k < 5 {
        return Err(invalid(format!("k = {k}; at least 5 extremes are required")));
    }
    let (fx, fy) = (ecdf(&xf), ecdf(&yf));
    let cut = 1.0 - k as f64 / n as f64;
    let chosen: Vec<usize> = (0..n).filter(|&i| fx[i] > cut).collect();
    if chosen.is_empty() {
        return Err(degenerate("ties leave no extreme x samples"));
    }
    let total: f64 = match form {
        TailCoefficientForm::Expectation => chosen.iter().map(|&i| fy[i]).sum(),
        TailCoefficientForm::JointExceedance => chosen.iter().filter(|&&i| fy[i] > cut).count() as f64,
    };
    Ok(total / chosen.len() as f64)
}

/// Tail-suite settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TailConfig {
    /// Quantile of the absolute residuals used as the GPD threshold.
    pub threshold_quantile: f64,
    pub hill_k_frac: f64,
    pub gev_blocks: usize,
    pub threshold_points: usize,
    pub return_probs: Vec<f64>,
    pub bootstrap: usize,
    pub ctc_k_frac: f64,
    pub ctc_form: TailCoefficientForm,
    pub seed: u64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            threshold_quantile: 0.9,
            hill_k_frac: 0.1,
            gev_blocks: 20,
            threshold_points: 20,
            return_probs: vec![1e-2, 1e-3, 1e-4],
            bootstrap: 200,
            ctc_k_frac: 0.1,
            ctc_form: TailCoefficientForm::Expectation,
            seed: 0,
        }
    }
}

/// All six diagnostics on one residual sample. Failed estimators hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub n: usize,
    pub threshold: f64,
    pub tail_n: usize,
    pub hill_alpha: Option<f64>,
    pub gpd_mle: Option<GpdFit>,
    pub gpd_pwm: Option<GpdFit>,
    pub gev: Option<GevFit>,
    pub mean_excess: Vec<(f64, f64)>,
    pub stability: Vec<StabilityPoint>,
    pub return_levels: Vec<ReturnLevel>,
    pub gamma_ctc: Option<f64>,
    /// Messages of the estimators that failed.
    pub failures: Vec<String>,
}

/// Runs the suite on absolute residuals; `treatment` (when given) feeds the causal
/// tail coefficient of treatment on |residual|.
pub fn tail_report<S: Scalar>(residuals: &[S], treatment: Option<&[S]>, cfg: &TailConfig) -> Result<TailReport> {
    let abs: Vec<f64> = residuals.iter().map(|r| r.as_f64().abs()).collect();
    check_all_finite(&abs, "residuals")?;
    if abs.len() < 50 {
        return Err(invalid("tail report needs at least 50 residuals"));
    }
    let mut failures = Vec::new();
    let mut note = |name: &str, e: AdrfError| failures.push(format!("{name}: {e}"));
    let threshold = stats::quantile(&abs, cfg.threshold_quantile)?;
    let excesses: Vec<f64> = abs.iter().filter(|&&v| v > threshold).map(|&v| v - threshold).collect();
    let tail_n = excesses.len();
    let hill_alpha = noted(hill(&abs, cfg.hill_k_frac), "hill", &mut note);
    let gpd_pwm = noted(gpd_fit_pwm(&excesses), "gpd_pwm", &mut note);
    let gpd_mle = noted(gpd_fit_mle(&excesses), "gpd_mle", &mut note);
    let gev = noted(gev_fit(&abs, cfg.gev_blocks), "gev", &mut note);
    let mean_excess = noted(mean_excess(&abs, cfg.threshold_points), "mean_excess", &mut note).unwrap_or_default();
    let stability =
        noted(parameter_stability(&abs, cfg.threshold_points), "parameter_stability", &mut note).unwrap_or_default();
    let return_levels = match gpd_mle.or(gpd_pwm) {
        Some(g) => noted(
            return_levels(g, threshold, abs.len(), tail_n, &cfg.return_probs, cfg.bootstrap, cfg.seed),
            "return_levels",
            &mut note,
        )
        .unwrap_or_default(),
        None => Vec::new(),
    };
    let gamma_ctc = treatment.and_then(|t| {
        let tf = to_f64(t);
        noted(causal_tail_coefficient(&tf, &abs, cfg.ctc_k_frac, cfg.ctc_form), "gamma_ctc", &mut note)
    });
    Ok(TailReport {
        n: abs.len(),
        threshold,
        tail_n,
        hill_alpha,
        gpd_mle,
        gpd_pwm,
        gev,
        mean_excess,
        stability,
        return_levels,
        gamma_ctc,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainLabel {
    WeibullBounded,
    BorderlineGumbel,
    FrechetHeavy,
    ParetoNoMean,
}

impl DomainLabel {
    pub fn name(self) -> &'static str {
        match self {
            DomainLabel::WeibullBounded => "weibull_bounded",
            DomainLabel::BorderlineGumbel => "borderline_gumbel",
            DomainLabel::FrechetHeavy => "frechet_heavy",
            DomainLabel::ParetoNoMean => "pareto_no_mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TDependence {
    Independent,
    TDependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Recommended {
    Method(MethodKind),
    /// Target the median dose response instead of the mean.
    SwitchEstimand,
}

impl Recommended {
    pub fn name(self) -> &'static str {
        match self {
            Recommended::Method(m) => m.name(),
            Recommended::SwitchEstimand => "switch_estimand",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Recommendation {
    pub domain: DomainLabel,
    pub t_dependence: TDependence,
    pub method: Recommended,
    /// No rule row matched; the default choice was used.
    pub ambiguous: bool,
}

/// Tail-driven estimator choice from the GPD shape, the Hill index and (optionally)
/// the causal tail coefficient. Missing or non-finite inputs fall to the default row.
pub fn decision_rule(xi: f64, alpha: f64, gamma: Option<f64>) -> Recommendation {
    let t_dep = gamma.is_some_and(|g| g >= 0.6);
    let t_dependence = if t_dep { TDependence::TDependent } else { TDependence::Independent };
    let shift = Recommended::Method(MethodKind::Shift);
    if xi >= 1.0 || alpha <= 1.0 {
        return Recommendation {
            domain: DomainLabel::ParetoNoMean,
            t_dependence,
            method: Recommended::SwitchEstimand,
            ambiguous: false,
        };
    }
    let (domain, method, ambiguous) = if xi <= -0.1 && alpha >= 5.0 {
        (DomainLabel::WeibullBounded, shift, false)
    } else if xi > -0.1 && xi < 0.1 && (3.0..5.0).contains(&alpha) {
        (DomainLabel::BorderlineGumbel, shift, false)
    } else if xi >= 0.1 || alpha < 3.0 {
        (DomainLabel::FrechetHeavy, Recommended::Method(MethodKind::QuantileDml), false)
    } else {
        (DomainLabel::BorderlineGumbel, shift, true)
    };
    let method = if t_dep && !ambiguous { Recommended::Method(MethodKind::HuberDml) } else { method };
    Recommendation { domain, t_dependence, method, ambiguous }
}

/// Applies [`decision_rule`] to a report (GPD-MLE shape, PWM when MLE failed).
pub fn recommend(report: &TailReport) -> Recommendation {
    let xi = report.gpd_mle.or(report.gpd_pwm).map_or(f64::NAN, |g| g.xi);
    decision_rule(xi, report.hill_alpha.unwrap_or(f64::NAN), report.gamma_ctc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hill_scale_invariant() {
        let v: Vec<f64> = (1..=200).map(|i| 1.0 / (i as f64 / 201.0).powf(1.0 / 3.0)).collect();
        let a = hill(&v, 0.1).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| x * 7.5).collect();
        assert!((a - hill(&scaled, 0.1).unwrap()).abs() < 1e-12);
        assert!(hill(&v[..10], 0.1).is_err());
    }

    #[test]
    fn return_level_identities() {
        let g = GpdFit { xi: 0.2, sigma: 1.5 };
        assert!((return_level(g, 4.0, 1000, 100, 0.1).unwrap() - 4.0).abs() < 1e-15);
        let exp = return_level(GpdFit { xi: 0.0, sigma: 1.5 }, 4.0, 1000, 100, 1e-3).unwrap();
        let near = return_level(GpdFit { xi: 1e-9, sigma: 1.5 }, 4.0, 1000, 100, 1e-3).unwrap();
        assert!((exp - near).abs() < 1e-6);
        assert!(return_level(g, 4.0, 1000, 100, 0.2).is_err());
        let l2 = return_level(g, 4.0, 1000, 100, 1e-2).unwrap();
        let l4 = return_level(g, 4.0, 1000, 100, 1e-4).unwrap();
        assert!(l4 > l2);
    }

    #[test]
    fn rule_rows() {
        let r = decision_rule(0.26, 2.68, Some(0.49));
        assert_eq!((r.domain, r.method), (DomainLabel::FrechetHeavy, Recommended::Method(MethodKind::QuantileDml)));
        let r = decision_rule(-0.26, 9.3, Some(0.50));
        assert_eq!((r.domain, r.method), (DomainLabel::WeibullBounded, Recommended::Method(MethodKind::Shift)));
        let r = decision_rule(1.2, 0.8, None);
        assert_eq!((r.domain, r.method), (DomainLabel::ParetoNoMean, Recommended::SwitchEstimand));
        let r = decision_rule(-0.3, 8.0, Some(0.7));
        assert_eq!(r.method, Recommended::Method(MethodKind::HuberDml));
        assert_eq!(r.t_dependence, TDependence::TDependent);
        assert!(decision_rule(f64::NAN, f64::NAN, None).ambiguous);
    }

    #[test]
    fn tail_coefficient_self_dependence() {
        let x: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64).collect();
        let g = causal_tail_coefficient(&x, &x, 0.1, TailCoefficientForm::Expectation).unwrap();
        assert!((g - (1.0 - 99.0 / 2000.0)).abs() < 1e-12);
        let j = causal_tail_coefficient(&x, &x, 0.1, TailCoefficientForm::JointExceedance).unwrap();
        assert_eq!(j, 1.0);
    }

    #[test]
    fn mean_excess_translation() {
        let v: Vec<f64> = (0..400).map(|i| (i as f64 * 0.37).sin().abs() * 3.0 + i as f64 / 100.0).collect();
        let shifted: Vec<f64> = v.iter().map(|x| x + 10.0).collect();
        let a = mean_excess(&v, 10).unwrap();
        let b = mean_excess(&shifted, 10).unwrap();
        for ((u, e), (us, es)) in a.iter().zip(&b) {
            assert!((us - u - 10.0).abs() < 1e-9 && (es - e).abs() < 1e-9);
        }
    }
}
