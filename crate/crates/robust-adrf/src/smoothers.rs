//! Kernel-local second stages: the Gaussian kernel window, weighted local-linear
//! least squares, the annealed Welsch (GNC) fit with its defensive refit, and the
//! Huber, quantile and winsorizing competitors.

use crate::error::{invalid, Result};
use crate::linalg::{weighted_least_squares, Matrix};
use crate::scalar::Scalar;
use crate::stats;

pub use crate::stats::{mad, median};

/// Samples whose kernel weight does not exceed this value are left out of a window.
pub const KERNEL_FLOOR: f64 = 1e-4;
/// Default annealing schedule of scale multipliers.
pub const DEFAULT_SCHEDULE: [f64; 7] = [10.0, 5.0, 3.0, 2.0, 1.5, 1.2, 1.0];
/// Gaussian consistency factor, applied to MAD only when configured.
pub const MAD_CONSISTENCY: f64 = 1.4826;
/// Smoothing constant of the quantile IRLS weights.
pub const QUANTILE_DELTA: f64 = 1e-6;
pub const QUANTILE_MAX_ITER: usize = 200;
const QUANTILE_TOL: f64 = 1e-10;
/// Consecutive IRLS steps smaller than this are not used as contraction denominators.
const CONTRACTION_MIN_STEP: f64 = 1e-12;

/// Which scale the defensive refit measures its inlier cutoff in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScaleSource {
    /// MAD of the window outcomes before fitting.
    PrefitMad,
    /// MAD of the residuals after annealing.
    PostGncMad,
}

/// Annealing and refit settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GncConfig {
    pub gamma: f64,
    pub schedule: Vec<f64>,
    pub irls_tol: f64,
    pub irls_max_iter: usize,
    pub cutoff_mult: f64,
    pub scale_source: ScaleSource,
    /// Multiply every MAD used for anchoring and cutoffs by 1.4826.
    pub mad_consistency: bool,
}

impl Default for GncConfig {
    fn default() -> Self {
        Self {
            gamma: 0.2,
            schedule: DEFAULT_SCHEDULE.to_vec(),
            irls_tol: 1e-6,
            irls_max_iter: 50,
            cutoff_mult: 3.0,
            scale_source: ScaleSource::PostGncMad,
            mad_consistency: false,
        }
    }
}

impl GncConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(invalid("gamma must be positive"));
        }
        if self.schedule.is_empty()
            || self.schedule.windows(2).any(|w| w[1] >= w[0])
            || self.schedule.last() != Some(&1.0)
            || self.schedule.iter().any(|&m| !(m > 0.0))
        {
            return Err(invalid("schedule must be strictly descending, positive, and end at 1.0"));
        }
        if !(self.irls_tol > 0.0) || self.irls_max_iter == 0 || !(self.cutoff_mult > 0.0) {
            return Err(invalid("irls_tol, irls_max_iter and cutoff_mult must be positive"));
        }
        Ok(())
    }

    fn scaled_mad<S: Scalar>(&self, v: &[S]) -> Result<S> {
        let m = mad(v)?;
        Ok(if self.mad_consistency { m * S::lit(MAD_CONSISTENCY) } else { m })
    }
}

/// Silverman's rule `1.06 sd(t) n^(-1/5)` with the sample standard deviation.
pub fn silverman_bandwidth<S: Scalar>(t: &[S]) -> Result<S> {
    if t.len() < 2 {
        return Err(invalid("bandwidth needs at least two samples"));
    }
    let sd = stats::std_dev(t);
    if !(sd > S::zero()) || !sd.is_finite() {
        return Err(invalid("bandwidth of a constant or non-finite sample"));
    }
    Ok(S::lit(1.06) * sd * S::from_count(t.len()).powf(S::lit(-0.2)))
}

/// Unnormalized Gaussian kernel `exp(-u^2 / (2 h^2))`.
pub fn gaussian_kernel<S: Scalar>(u: S, h: S) -> Result<S> {
    if !(h > S::zero()) {
        return Err(invalid("kernel bandwidth must be positive"));
    }
    let z = u / h;
    Ok((-(z * z) / S::lit(2.0)).exp())
}

/// Welsch weight `exp(-(gamma / 2) (r / sigma_eff)^2)`.
pub fn welsch_weight<S: Scalar>(r: S, sigma_eff: S, gamma: S) -> S {
    let z = r / sigma_eff;
    (-(gamma / S::lit(2.0)) * z * z).exp()
}

/// Smallest robust weight ever emitted; keeps combined weights strictly positive.
fn weight_floor<S: Scalar>() -> S {
    S::min_positive_value().sqrt()
}

/// Samples entering the local fit at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWindow<S> {
    pub indices: Vec<usize>,
    pub k_weights: Vec<S>,
    /// Rows `[1, t_local...]`.
    design: Matrix<S>,
    pub y_local: Vec<S>,
    /// Ground-truth contamination flags of the members, when known.
    pub outlier: Option<Vec<bool>>,
}

impl<S: Scalar> KernelWindow<S> {
    /// One-dimensional window at `t0`: kernel weights from `t_kernel`, local design
    /// `t_design - t0`.
    pub fn build(t_kernel: &[S], t_design: &[S], y: &[S], t0: S, h: S, mask: Option<&[bool]>) -> Result<Self> {
        Self::build_product(
            &Matrix::column(t_kernel),
            &Matrix::column(t_design),
            y,
            &[t0],
            &[h],
            mask,
        )
    }

    /// Product-kernel window at the point `t0` with per-dimension bandwidths `h`.
    pub fn build_product(
        t_kernel: &Matrix<S>,
        t_design: &Matrix<S>,
        y: &[S],
        t0: &[S],
        h: &[S],
        mask: Option<&[bool]>,
    ) -> Result<Self> {
        let d = t0.len();
        if t_kernel.ncols() != d || t_design.ncols() != d || h.len() != d {
            return Err(invalid("window dimension mismatch"));
        }
        if t_kernel.nrows() != y.len() || t_design.nrows() != y.len() || mask.is_some_and(|m| m.len() != y.len()) {
            return Err(invalid("window input length mismatch"));
        }
        if h.iter().any(|&v| !(v > S::zero())) {
            return Err(invalid("kernel bandwidth must be positive"));
        }
        let floor = S::lit(KERNEL_FLOOR);
        let mut indices = Vec::new();
        let mut k_weights = Vec::new();
        let mut rows = Vec::new();
        for i in 0..y.len() {
            let mut w = S::one();
            for j in 0..d {
                w = w * gaussian_kernel(t_kernel.get(i, j) - t0[j], h[j])?;
            }
            if w > floor {
                indices.push(i);
                k_weights.push(w);
                rows.push(S::one());
                rows.extend((0..d).map(|j| t_design.get(i, j) - t0[j]));
            }
        }
        let m = indices.len();
        Ok(Self {
            y_local: indices.iter().map(|&i| y[i]).collect(),
            outlier: mask.map(|mk| indices.iter().map(|&i| mk[i]).collect()),
            design: Matrix::new(m, d + 1, rows)?,
            indices,
            k_weights,
        })
    }

    /// Window from explicit members; `t_local` has one row per member.
    pub fn from_parts(
        indices: Vec<usize>,
        k_weights: Vec<S>,
        t_local: &Matrix<S>,
        y_local: Vec<S>,
        outlier: Option<Vec<bool>>,
    ) -> Result<Self> {
        let m = indices.len();
        if k_weights.len() != m || t_local.nrows() != m || y_local.len() != m || outlier.as_ref().is_some_and(|o| o.len() != m) {
            return Err(invalid("window parts have different lengths"));
        }
        if k_weights.iter().any(|&w| !(w > S::lit(KERNEL_FLOOR))) {
            return Err(invalid("kernel weights must exceed the window floor"));
        }
        let d = t_local.ncols();
        let mut rows = Vec::with_capacity(m * (d + 1));
        for i in 0..m {
            rows.push(S::one());
            rows.extend_from_slice(t_local.row(i));
        }
        Ok(Self { indices, k_weights, design: Matrix::new(m, d + 1, rows)?, y_local, outlier })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Treatment dimension of the local design.
    pub fn dim(&self) -> usize {
        self.design.ncols() - 1
    }

    /// Local treatment offsets of member `i`.
    pub fn t_local(&self, i: usize) -> &[S] {
        &self.design.row(i)[1..]
    }

    pub fn design(&self) -> &Matrix<S> {
        &self.design
    }

    /// Kernel-weighted share of known outliers, if the truth mask was supplied.
    pub fn outlier_mass(&self) -> Option<S> {
        let mask = self.outlier.as_ref()?;
        let total: S = self.k_weights.iter().copied().sum();
        if total == S::zero() {
            return Some(S::zero());
        }
        let bad: S = self.k_weights.iter().zip(mask).filter(|(_, &m)| m).map(|(&w, _)| w).sum();
        Some(bad / total)
    }

    fn residuals(&self, alpha: S, theta: &[S]) -> Vec<S> {
        (0..self.len())
            .map(|i| {
                let fit = alpha + self.t_local(i).iter().zip(theta).map(|(&a, &b)| a * b).sum::<S>();
                self.y_local[i] - fit
            })
            .collect()
    }

    fn combined(&self, robust: &[S]) -> Vec<S> {
        self.k_weights.iter().zip(robust).map(|(&a, &b)| a * b).collect()
    }
}

/// Intercept and slope(s) of a local-linear fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit<S> {
    pub alpha: S,
    pub theta: Vec<S>,
}

impl<S: Scalar> LinearFit<S> {
    fn from_params(p: Vec<S>) -> Self {
        Self { alpha: p[0], theta: p[1..].to_vec() }
    }

    pub fn params(&self) -> Vec<S> {
        let mut p = vec![self.alpha];
        p.extend_from_slice(&self.theta);
        p
    }
}

/// Minimizes `sum W_i (y_i - alpha - theta . t_local_i)^2`.
pub fn weighted_local_linear<S: Scalar>(window: &KernelWindow<S>, weights: &[S]) -> Result<LinearFit<S>> {
    if weights.len() != window.len() {
        return Err(invalid("weight vector length differs from window"));
    }
    Ok(LinearFit::from_params(weighted_least_squares(&window.design, &window.y_local, weights)?))
}

/// Result of a kernel-local second stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit<S> {
    pub alpha: S,
    pub theta: Vec<S>,
    /// Robust weight of each window member, in (0, 1].
    pub robust_weights: Vec<S>,
    /// Residuals of the robust (pre-refit) fit.
    pub post_residuals: Vec<S>,
    pub inlier_mask: Vec<bool>,
    /// Scale the annealing was anchored to.
    pub anchor: S,
    /// Scale of the defensive-refit cutoff, once a refit has been attempted.
    pub cutoff_scale: Option<S>,
    pub a5_violation: bool,
    /// `(schedule step, ratio)` of consecutive IRLS step lengths.
    pub contraction_ratios: Vec<(usize, S)>,
    pub converged: bool,
    /// The method emits no per-sample information (all robust weights are one).
    pub uniform_weights: bool,
}

impl<S: Scalar> LocalFit<S> {
    /// First slope (the only one for a scalar treatment).
    pub fn slope(&self) -> S {
        self.theta[0]
    }

    fn uniform(window: &KernelWindow<S>, fit: LinearFit<S>, converged: bool) -> Self {
        let post_residuals = window.residuals(fit.alpha, &fit.theta);
        Self {
            alpha: fit.alpha,
            theta: fit.theta,
            robust_weights: vec![S::one(); window.len()],
            inlier_mask: vec![true; window.len()],
            post_residuals,
            anchor: S::zero(),
            cutoff_scale: None,
            a5_violation: a5_flag(window),
            contraction_ratios: Vec::new(),
            converged,
            uniform_weights: true,
        }
    }
}

fn a5_flag<S: Scalar>(window: &KernelWindow<S>) -> bool {
    window.outlier_mass().is_some_and(|m| m > S::lit(0.5))
}

fn norm2<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<S>().sqrt()
}

fn norm_inf<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |m, (&x, &y)| m.max((x - y).abs()))
}

/// Annealed Welsch fit anchored to the window MAD of the outcomes.
pub fn gnc_fit<S: Scalar>(window: &KernelWindow<S>, cfg: &GncConfig) -> Result<LocalFit<S>> {
    let anchor = cfg.scaled_mad(&window.y_local)?;
    gnc_fit_with_anchor(window, cfg, anchor)
}

/// Annealed Welsch fit with an explicit anchor scale.
///
/// Starts from `(median(y_local), 0)` and, for each multiplier `mu` of the schedule,
/// iterates weighted least squares with weights `w^k * welsch(r, mu * anchor, gamma)`
/// until the slope moves less than `irls_tol` in sup-norm.
pub fn gnc_fit_with_anchor<S: Scalar>(window: &KernelWindow<S>, cfg: &GncConfig, anchor: S) -> Result<LocalFit<S>> {
    cfg.validate()?;
    if window.len() < window.dim() + 1 {
        return Err(invalid("window too small for a local-linear fit"));
    }
    let gamma = S::lit(cfg.gamma);
    let floor = weight_floor::<S>();
    let mut alpha = median(&window.y_local)?;
    let mut theta = vec![S::zero(); window.dim()];
    if !(anchor > S::zero()) {
        let post_residuals = window.residuals(alpha, &theta);
        let robust_weights = post_residuals.iter().map(|&r| if r == S::zero() { S::one() } else { floor }).collect();
        return Ok(LocalFit {
            alpha,
            theta,
            robust_weights,
            inlier_mask: vec![true; window.len()],
            post_residuals,
            anchor: S::zero(),
            cutoff_scale: None,
            a5_violation: a5_flag(window),
            contraction_ratios: Vec::new(),
            converged: true,
            uniform_weights: false,
        });
    }
    let tol = S::lit(cfg.irls_tol);
    let mut ratios = Vec::new();
    let mut converged = true;
    for (step, &mu) in cfg.schedule.iter().enumerate() {
        let sigma = S::lit(mu) * anchor;
        let mut prev_step: Option<S> = None;
        let mut step_converged = false;
        for _ in 0..cfg.irls_max_iter {
            let r = window.residuals(alpha, &theta);
            let robust: Vec<S> = r.iter().map(|&ri| welsch_weight(ri, sigma, gamma).max(floor)).collect();
            let Ok(next) = weighted_local_linear(window, &window.combined(&robust)) else {
                break;
            };
            let len = norm2(&next.theta, &theta);
            if let Some(p) = prev_step {
                if p > S::lit(CONTRACTION_MIN_STEP) {
                    ratios.push((step, len / p));
                }
            }
            prev_step = Some(len);
            let done = norm_inf(&next.theta, &theta) < tol;
            alpha = next.alpha;
            theta = next.theta;
            if done {
                step_converged = true;
                break;
            }
        }
        converged &= step_converged;
    }
    let post_residuals = window.residuals(alpha, &theta);
    let last = S::lit(*cfg.schedule.last().expect("validated non-empty")) * anchor;
    let robust_weights = post_residuals.iter().map(|&r| welsch_weight(r, last, gamma).max(floor)).collect();
    Ok(LocalFit {
        alpha,
        theta,
        robust_weights,
        inlier_mask: vec![true; window.len()],
        post_residuals,
        anchor,
        cutoff_scale: None,
        a5_violation: a5_flag(window),
        contraction_ratios: ratios,
        converged,
        uniform_weights: false,
    })
}

/// Kernel-weighted OLS restricted to residuals within `cutoff_mult` cutoff scales.
///
/// The cutoff scale is the MAD of the post-annealing residuals or the MAD of the
/// window outcomes, per `cfg.scale_source`. With fewer than two inliers, a zero
/// scale, or a singular inlier design, the annealed fit is returned unchanged.
pub fn defensive_refit<S: Scalar>(fit: &LocalFit<S>, window: &KernelWindow<S>, cfg: &GncConfig) -> LocalFit<S> {
    let scale = match cfg.scale_source {
        ScaleSource::PostGncMad => cfg.scaled_mad(&fit.post_residuals),
        ScaleSource::PrefitMad => cfg.scaled_mad(&window.y_local),
    }
    .unwrap_or(S::zero());
    let cut = S::lit(cfg.cutoff_mult) * scale;
    let inlier_mask: Vec<bool> = fit.post_residuals.iter().map(|r| r.abs() <= cut).collect();
    let mut out = fit.clone();
    out.inlier_mask = inlier_mask;
    out.cutoff_scale = Some(scale);
    let count = out.inlier_mask.iter().filter(|&&m| m).count();
    if scale == S::zero() || count < 2 {
        return out;
    }
    let w: Vec<S> = window
        .k_weights
        .iter()
        .zip(&out.inlier_mask)
        .map(|(&k, &m)| if m { k } else { S::zero() })
        .collect();
    if let Ok(refit) = weighted_local_linear(window, &w) {
        out.alpha = refit.alpha;
        out.theta = refit.theta;
    }
    out
}

/// Kernel-weighted OLS second stage.
pub fn second_stage_ols<S: Scalar>(window: &KernelWindow<S>) -> Result<LocalFit<S>> {
    let fit = weighted_local_linear(window, &window.k_weights)?;
    Ok(LocalFit::uniform(window, fit, true))
}

/// Huber loss with threshold `c`.
pub fn huber_loss<S: Scalar>(r: S, c: S) -> S {
    let a = r.abs();
    if a <= c {
        a * a / S::lit(2.0)
    } else {
        c * a - c * c / S::lit(2.0)
    }
}

/// Check (pinball) loss at level `tau`.
pub fn pinball_loss<S: Scalar>(r: S, tau: S) -> S {
    if r >= S::zero() {
        tau * r
    } else {
        (tau - S::one()) * r
    }
}

fn design_residuals<S: Scalar>(design: &Matrix<S>, y: &[S], beta: &[S]) -> Vec<S> {
    (0..design.nrows())
        .map(|i| y[i] - design.row(i).iter().zip(beta).map(|(&a, &b)| a * b).sum::<S>())
        .collect()
}

/// Outcome of an iteratively reweighted robust regression.
#[derive(Debug, Clone, PartialEq)]
pub struct IrlsResult<S> {
    pub beta: Vec<S>,
    /// Final residual scale (Huber) or zero (quantile).
    pub scale: S,
    pub converged: bool,
}

/// Huber regression by IRLS with weights `base_w * min(1, eps sigma / |r|)`, where
/// `sigma` is the raw MAD of the current residuals, refreshed each iteration.
/// Starts from weighted OLS; stops when the non-intercept coefficients move less than
/// `tol` in sup-norm.
pub fn huber_irls<S: Scalar>(
    design: &Matrix<S>,
    y: &[S],
    base_w: &[S],
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> Result<IrlsResult<S>> {
    if !(eps > 0.0) {
        return Err(invalid("huber epsilon must be positive"));
    }
    let mut beta = weighted_least_squares(design, y, base_w)?;
    let mut scale = S::zero();
    let mut converged = false;
    let eps = S::lit(eps);
    for _ in 0..max_iter {
        let r = design_residuals(design, y, &beta);
        scale = mad(&r)?;
        if scale == S::zero() {
            converged = true;
            break;
        }
        let c = eps * scale;
        let w: Vec<S> = r
            .iter()
            .zip(base_w)
            .map(|(&ri, &b)| if ri.abs() <= c { b } else { b * c / ri.abs() })
            .collect();
        let Ok(next) = weighted_least_squares(design, y, &w) else {
            break;
        };
        let moved = norm_inf(&next[1..], &beta[1..]);
        beta = next;
        if moved < S::lit(tol) {
            converged = true;
            break;
        }
    }
    Ok(IrlsResult { beta, scale, converged })
}

/// Kernel-local Huber regression (uniform robust weights for detection purposes).
pub fn second_stage_huber<S: Scalar>(window: &KernelWindow<S>, eps: f64) -> Result<LocalFit<S>> {
    let defaults = GncConfig::default();
    let res = huber_irls(window.design(), &window.y_local, &window.k_weights, eps, defaults.irls_tol, defaults.irls_max_iter)?;
    Ok(LocalFit::uniform(window, LinearFit::from_params(res.beta), res.converged))
}

/// Quantile regression by smoothed IRLS with weights
/// `base_w * q_i / (|r_i| + delta)`, `q_i = tau` for positive residuals and
/// `1 - tau` otherwise, starting from weighted OLS.
///
/// The smoothing constant is lowered in stages from `1e-2 mad(r)` to `delta`;
/// starting at the final value lets samples with tiny residuals lock the fit onto a
/// suboptimal vertex.
pub fn quantile_irls<S: Scalar>(
    design: &Matrix<S>,
    y: &[S],
    base_w: &[S],
    tau: f64,
    max_iter: usize,
    delta: f64,
) -> Result<IrlsResult<S>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid("quantile level must lie in (0, 1)"));
    }
    let t = S::lit(tau);
    let mut beta = weighted_least_squares(design, y, base_w)?;
    let start = mad(&design_residuals(design, y, &beta))?.as_f64() * 1e-2;
    let mut stages = Vec::new();
    let mut level = start;
    while level > delta {
        stages.push(level);
        level *= 0.1;
    }
    stages.push(delta);
    let mut converged = false;
    for (s, &stage) in stages.iter().enumerate() {
        let d = S::lit(stage);
        let last = s + 1 == stages.len();
        converged = false;
        for _ in 0..max_iter {
            let r = design_residuals(design, y, &beta);
            let w: Vec<S> = r
                .iter()
                .zip(base_w)
                .map(|(&ri, &b)| {
                    let q = if ri > S::zero() { t } else { S::one() - t };
                    b * q / (ri.abs() + d)
                })
                .collect();
            let Ok(next) = weighted_least_squares(design, y, &w) else {
                break;
            };
            let moved = norm_inf(&next, &beta);
            beta = next;
            if moved < S::lit(if last { QUANTILE_TOL } else { stage }) {
                converged = true;
                break;
            }
        }
    }
    Ok(IrlsResult { beta, scale: S::zero(), converged })
}

/// Kernel-local quantile regression (uniform robust weights).
pub fn second_stage_quantile<S: Scalar>(window: &KernelWindow<S>, tau: f64) -> Result<LocalFit<S>> {
    let res = quantile_irls(window.design(), &window.y_local, &window.k_weights, tau, QUANTILE_MAX_ITER, QUANTILE_DELTA)?;
    Ok(LocalFit::uniform(window, LinearFit::from_params(res.beta), res.converged))
}

/// Winsorized outcomes with their clamp diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Winsorized<S> {
    pub values: Vec<S>,
    pub clamped: Vec<bool>,
    /// One for kept samples; `bound / |y - median|` in (0, 1) for clamped ones.
    pub score: Vec<S>,
}

/// Clamps `y` to `median(y) +- mult * mad(y)`.
pub fn winsorize<S: Scalar>(y: &[S], mult: f64) -> Result<Winsorized<S>> {
    let med = median(y)?;
    let half = S::lit(mult) * mad(y)?;
    let (lo, hi) = (med - half, med + half);
    let mut values = Vec::with_capacity(y.len());
    let mut clamped = Vec::with_capacity(y.len());
    let mut score = Vec::with_capacity(y.len());
    let floor = weight_floor::<S>();
    for &v in y {
        let c = v.max(lo).min(hi);
        let was = c != v;
        values.push(c);
        clamped.push(was);
        score.push(if was { (half / (v - med).abs()).max(floor) } else { S::one() });
    }
    Ok(Winsorized { values, clamped, score })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_window(n: usize, a: f64, b: f64) -> KernelWindow<f64> {
        let t: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let y: Vec<f64> = t.iter().map(|&v| a + b * v).collect();
        KernelWindow::build(&t, &t, &y, 0.0, 1.0, None).unwrap()
    }

    #[test]
    fn bandwidth_examples() {
        // A sample whose sd is exactly one.
        let t: Vec<f64> = (0..800).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let sd = stats::std_dev(&t);
        let h = silverman_bandwidth(&t).unwrap() / sd;
        assert!((h - 0.2785).abs() < 1e-4);
        let scaled: Vec<f64> = t.iter().map(|v| 3.0 * v).collect();
        assert!((silverman_bandwidth(&scaled).unwrap() - 3.0 * silverman_bandwidth(&t).unwrap()).abs() < 1e-12);
        assert!(silverman_bandwidth(&[1.0f64]).is_err());
        assert!(silverman_bandwidth(&[2.0f64; 5]).is_err());
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(gaussian_kernel(0.0f64, 0.3).unwrap(), 1.0);
        assert!((gaussian_kernel(0.3f64, 0.3).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(gaussian_kernel(0.7f64, 0.2).unwrap(), gaussian_kernel(-0.7f64, 0.2).unwrap());
        assert!(gaussian_kernel(1.0f64, 0.0).is_err());
    }

    #[test]
    fn welsch_examples() {
        assert_eq!(welsch_weight(0.0f64, 1.0, 0.2), 1.0);
        assert!((welsch_weight(1.5f64, 1.5, 2.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(welsch_weight(100.0f64, 1.0, 1e-12) > 0.999_999);
    }

    #[test]
    fn constant_and_exact_line() {
        let w = line_window(20, 2.0, 3.0);
        let fit = weighted_local_linear(&w, &w.k_weights).unwrap();
        assert!((fit.alpha - 2.0).abs() < 1e-10 && (fit.theta[0] - 3.0).abs() < 1e-10);
        let c = line_window(20, 4.5, 0.0);
        let fit = weighted_local_linear(&c, &vec![0.3; 20]).unwrap();
        assert!((fit.alpha - 4.5).abs() < 1e-12 && fit.theta[0].abs() < 1e-12);
    }

    #[test]
    fn gnc_on_noiseless_line_is_exact() {
        let w = line_window(40, -1.0, 0.7);
        let fit = gnc_fit(&w, &GncConfig::default()).unwrap();
        assert!((fit.slope() - 0.7).abs() < 1e-6);
        assert_eq!(GncConfig::default().schedule.len(), 7);
    }

    #[test]
    fn gnc_zero_anchor_returns_exact_constant() {
        let w = line_window(12, 3.0, 0.0);
        let fit = gnc_fit(&w, &GncConfig::default()).unwrap();
        assert_eq!((fit.alpha, fit.slope()), (3.0, 0.0));
    }

    #[test]
    fn config_validation() {
        let mut c = GncConfig::default();
        c.schedule = vec![5.0, 2.0];
        assert!(c.validate().is_err());
        c.schedule = vec![1.0, 2.0, 1.0];
        assert!(c.validate().is_err());
        c = GncConfig { gamma: 0.0, ..GncConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn huber_weight_at_twice_the_threshold() {
        // With residual |r| = 2 eps sigma the IRLS weight is min(1, 1/2).
        let (eps, sigma, r) = (1.35f64, 0.8, 2.0 * 1.35 * 0.8);
        assert!(((eps * sigma / r).min(1.0) - 0.5).abs() < 1e-15);
        assert!((huber_loss(3.0f64, 1.0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn quantile_intercept_only_is_median() {
        let design = Matrix::column(&[1.0f64, 1.0, 1.0]);
        let res = quantile_irls(&design, &[-1.0, 0.0, 1.0], &[1.0; 3], 0.5, 200, QUANTILE_DELTA).unwrap();
        assert!(res.beta[0].abs() < 1e-6);
        assert!(second_stage_quantile(&line_window(10, 0.0, 1.0), 1.0).is_err());
    }

    #[test]
    fn winsorize_examples() {
        let y = [0.0f64, 0.0, 0.0, 0.0, 100.0];
        let w = winsorize(&y, 3.0).unwrap();
        assert_eq!(w.values, vec![0.0; 5]);
        assert_eq!(w.clamped, vec![false, false, false, false, true]);
        assert!(w.score[4] > 0.0 && w.score[4] < 1.0);
        let inside = [1.0f64, 2.0, 3.0];
        assert_eq!(winsorize(&inside, 3.0).unwrap().values, inside.to_vec());
        let sym = [-5.0f64, -1.0, 0.0, 1.0, 5.0];
        let out = winsorize(&sym, 1.0).unwrap().values;
        for i in 0..5 {
            assert_eq!(out[i], -out[4 - i]);
        }
    }

    #[test]
    fn window_floor_and_f32_instantiation() {
        let t: Vec<f32> = (0..50).map(|i| i as f32 / 10.0).collect();
        let y: Vec<f32> = t.iter().map(|v| 1.0 + v).collect();
        let w = KernelWindow::build(&t, &t, &y, 2.5f32, 0.3, None).unwrap();
        assert!(w.k_weights.iter().all(|&k| k > 1e-4));
        assert!(w.len() < 50);
        let fit = gnc_fit(&w, &GncConfig::default()).unwrap();
        assert!((fit.slope() - 1.0).abs() < 1e-3);
    }
}
