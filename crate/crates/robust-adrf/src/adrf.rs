//! Dose-response curve assembly: the treatment grid, per-grid-point second stages,
//! interpolation of sparse grid points, slope integration with intercept anchoring,
//! and per-sample outlier scores. Also the product-kernel surface estimator for
//! vector treatments.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{degenerate, invalid, AdrfError, Result};
use crate::linalg::Matrix;
use crate::nuisance::{MultiResidualized, Residualized};
use crate::scalar::Scalar;
use crate::smoothers::{
    defensive_refit, gnc_fit_with_anchor, mad, second_stage_huber, second_stage_ols, second_stage_quantile,
    silverman_bandwidth, winsorize, GncConfig, KernelWindow, LocalFit, ScaleSource,
};
use crate::stats;

/// Second-stage estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodKind {
    NaiveLl,
    StandardDml,
    WinsorDml,
    HuberDml,
    QuantileDml,
    GncFixed,
    Shift,
}

impl MethodKind {
    pub const ALL: [MethodKind; 7] = [
        MethodKind::NaiveLl,
        MethodKind::StandardDml,
        MethodKind::WinsorDml,
        MethodKind::HuberDml,
        MethodKind::QuantileDml,
        MethodKind::GncFixed,
        MethodKind::Shift,
    ];

    /// Methods whose per-sample weights carry no information.
    pub fn is_uniform(self) -> bool {
        matches!(self, MethodKind::NaiveLl | MethodKind::StandardDml | MethodKind::HuberDml | MethodKind::QuantileDml)
    }

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::NaiveLl => "naive_ll",
            MethodKind::StandardDml => "standard_dml",
            MethodKind::WinsorDml => "winsor_dml",
            MethodKind::HuberDml => "huber_dml",
            MethodKind::QuantileDml => "quantile_dml",
            MethodKind::GncFixed => "gnc_fixed",
            MethodKind::Shift => "shift",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = AdrfError;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown method '{s}'")))
    }
}

/// Tuning constants of the competing second stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodParams {
    pub huber_eps: f64,
    pub quantile_tau: f64,
    pub winsor_mult: f64,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self { huber_eps: 1.35, quantile_tau: 0.5, winsor_mult: 3.0 }
    }
}

/// Treatment values entering the local design `t_i - t0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DesignTreatment {
    /// Observed treatment, the same coordinate the kernel is evaluated in.
    Raw,
    /// Cross-fitted treatment residual.
    Residualized,
}

/// How per-sample scores average the weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreMode {
    /// Average over every grid point, counting unvisited cells as one.
    AllGridPoints,
    /// Average over the grid points whose window contained the sample.
    VisitedOnly,
}

/// Scale the annealing is anchored to at each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnchorRule {
    /// MAD of the window outcomes.
    WindowMad,
    /// MAD of the outcomes of the `w` most recent window members (sample index is time).
    RecentMad { w: usize },
}

/// Settings of the curve assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct AdrfConfig {
    pub gnc: GncConfig,
    pub params: MethodParams,
    pub h_scale: f64,
    pub grid_size: usize,
    /// Grid points whose window holds fewer samples are interpolated.
    pub min_window: usize,
    pub design: DesignTreatment,
    pub score_mode: ScoreMode,
    pub anchor: AnchorRule,
    /// Fixed grid overriding the percentile grid.
    pub grid: Option<Vec<f64>>,
    /// Fixed bandwidth overriding the rule-of-thumb bandwidth.
    pub bandwidth: Option<f64>,
    /// Fit grid points on the rayon pool.
    pub parallel: bool,
}

impl Default for AdrfConfig {
    fn default() -> Self {
        Self {
            gnc: GncConfig::default(),
            params: MethodParams::default(),
            h_scale: 1.0,
            grid_size: 40,
            min_window: 8,
            design: DesignTreatment::Raw,
            score_mode: ScoreMode::AllGridPoints,
            anchor: AnchorRule::WindowMad,
            grid: None,
            bandwidth: None,
            parallel: true,
        }
    }
}

/// Per-grid-point diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDiagnostics<S> {
    pub window_size: usize,
    pub defined: bool,
    pub outlier_mass: Option<S>,
    pub a5_violation: bool,
    pub contraction_ratios: Vec<(usize, S)>,
    pub inliers: usize,
    pub converged: bool,
}

/// Estimated dose-response curve.
#[derive(Debug, Clone, PartialEq)]
pub struct AdrfEstimate<S> {
    pub grid: Vec<S>,
    /// Local slopes, interpolated where the grid point was undefined.
    pub theta: Vec<S>,
    /// Local intercepts, interpolated the same way.
    pub intercepts: Vec<S>,
    /// Integrated and anchored levels.
    pub g_curve: Vec<S>,
    pub defined: Vec<bool>,
    /// `G x n` robust weights (one outside a window).
    pub weight_matrix: Matrix<S>,
    pub sample_scores: Vec<S>,
    pub uniform_weights: bool,
    pub bandwidth: S,
    pub diagnostics: Vec<GridDiagnostics<S>>,
}

impl<S: Scalar> AdrfEstimate<S> {
    /// Level curve at `t` by linear interpolation, clamped to the grid ends.
    pub fn level_at(&self, t: S) -> S {
        interpolate_at(&self.grid, &self.g_curve, t)
    }

    /// Share of grid points whose window has kernel-weighted outlier mass above one half.
    pub fn a5_fraction(&self) -> S {
        let bad = self.diagnostics.iter().filter(|d| d.a5_violation).count();
        S::from_count(bad) / S::from_count(self.grid.len())
    }
}

fn interpolate_at<S: Scalar>(grid: &[S], values: &[S], t: S) -> S {
    let g = grid.len();
    if t <= grid[0] {
        return values[0];
    }
    if t >= grid[g - 1] {
        return values[g - 1];
    }
    let j = grid.partition_point(|&v| v <= t).clamp(1, g - 1);
    let w = (t - grid[j - 1]) / (grid[j] - grid[j - 1]);
    values[j - 1] + (values[j] - values[j - 1]) * w
}

/// `g` equally spaced points between the empirical 5th and 95th percentiles.
pub fn make_grid<S: Scalar>(t: &[S], g: usize) -> Result<Vec<S>> {
    if g < 2 {
        return Err(invalid("grid needs at least two points"));
    }
    let s = stats::sorted(t);
    let lo = stats::quantile_sorted(&s, 0.05)?;
    let hi = stats::quantile_sorted(&s, 0.95)?;
    if !(hi > lo) {
        return Err(degenerate("5th and 95th treatment percentiles coincide"));
    }
    Ok(stats::linspace(lo, hi, g))
}

/// Fills undefined entries by linear interpolation between the nearest defined
/// neighbours; ends take the nearest defined value.
pub fn interpolate_undefined<S: Scalar>(values: &mut [S], defined: &[bool], grid: &[S]) -> Result<()> {
    let known: Vec<usize> = (0..values.len()).filter(|&i| defined[i]).collect();
    let (&first, &last) = match (known.first(), known.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(AdrfError::Estimation("no grid point could be fitted".into())),
    };
    for i in 0..values.len() {
        if defined[i] {
            continue;
        }
        values[i] = if i < first {
            values[first]
        } else if i > last {
            values[last]
        } else {
            let right = known[known.partition_point(|&k| k < i)];
            let left = known[known.partition_point(|&k| k < i) - 1];
            let w = (grid[i] - grid[left]) / (grid[right] - grid[left]);
            values[left] + (values[right] - values[left]) * w
        };
    }
    Ok(())
}

/// Trapezoidal cumulative integral of the slopes, shifted so that its mean equals
/// the mean of the local intercepts.
pub fn integrate_and_anchor<S: Scalar>(theta: &[S], intercepts: &[S], grid: &[S]) -> Result<Vec<S>> {
    let g = grid.len();
    if g < 2 || theta.len() != g || intercepts.len() != g {
        return Err(invalid("integration needs equal-length inputs of length >= 2"));
    }
    let half = S::lit(0.5);
    let mut s = vec![S::zero(); g];
    for j in 1..g {
        s[j] = s[j - 1] + (theta[j - 1] + theta[j]) * half * (grid[j] - grid[j - 1]);
    }
    let shift = stats::mean(intercepts) - stats::mean(&s);
    Ok(s.into_iter().map(|v| v + shift).collect())
}

/// Finite-difference derivative: central differences inside, one-sided at the ends.
pub fn derivative_on_grid<S: Scalar>(curve: &[S], grid: &[S]) -> Result<Vec<S>> {
    let g = grid.len();
    if g < 2 || curve.len() != g {
        return Err(invalid("derivative needs equal-length inputs of length >= 2"));
    }
    Ok((0..g)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(g - 1));
            (curve[b] - curve[a]) / (grid[b] - grid[a])
        })
        .collect())
}

struct PointFit<S> {
    fit: Option<LocalFit<S>>,
    window: KernelWindow<S>,
}

fn fit_point<S: Scalar>(window: &KernelWindow<S>, method: MethodKind, cfg: &AdrfConfig) -> Result<LocalFit<S>> {
    match method {
        MethodKind::NaiveLl | MethodKind::StandardDml | MethodKind::WinsorDml => second_stage_ols(window),
        MethodKind::HuberDml => second_stage_huber(window, cfg.params.huber_eps),
        MethodKind::QuantileDml => second_stage_quantile(window, cfg.params.quantile_tau),
        MethodKind::GncFixed | MethodKind::Shift => {
            let gnc = GncConfig {
                scale_source: if method == MethodKind::Shift { ScaleSource::PostGncMad } else { ScaleSource::PrefitMad },
                ..cfg.gnc.clone()
            };
            let anchor_sample: &[S] = match cfg.anchor {
                AnchorRule::WindowMad => &window.y_local,
                // Members are in ascending index order, so the tail is the most recent.
                AnchorRule::RecentMad { w } => &window.y_local[window.len().saturating_sub(w)..],
            };
            let mut anchor = mad(anchor_sample)?;
            if gnc.mad_consistency {
                anchor = anchor * S::lit(crate::smoothers::MAD_CONSISTENCY);
            }
            let fit = gnc_fit_with_anchor(window, &gnc, anchor)?;
            Ok(defensive_refit(&fit, window, &gnc))
        }
    }
}

/// Fits the dose-response curve with `method` on residualized data.
///
/// The naive smoother uses the raw outcome; every other method uses the outcome
/// residual. The kernel is evaluated in the observed treatment.
pub fn fit_adrf<S: Scalar>(res: &Residualized<S>, method: MethodKind, cfg: &AdrfConfig) -> Result<AdrfEstimate<S>> {
    let n = res.n();
    if n < 50 {
        return Err(invalid(format!("n = {n} below the minimum of 50")));
    }
    if cfg.min_window < 2 {
        return Err(invalid("min_window must be at least 2"));
    }
    cfg.gnc.validate()?;
    let naive = method == MethodKind::NaiveLl;
    let t_kernel = &res.t_raw;
    let t_design: &[S] = match (naive, cfg.design) {
        (false, DesignTreatment::Residualized) => &res.t_tilde,
        _ => &res.t_raw,
    };
    let winsor = if method == MethodKind::WinsorDml { Some(winsorize(&res.y_tilde, cfg.params.winsor_mult)?) } else { None };
    let y: &[S] = match (&winsor, naive) {
        (Some(w), _) => &w.values,
        (None, true) => &res.y_raw,
        (None, false) => &res.y_tilde,
    };
    let grid: Vec<S> = match &cfg.grid {
        Some(g) => g.iter().map(|&v| S::lit(v)).collect(),
        None => make_grid(t_kernel, cfg.grid_size)?,
    };
    let h = match cfg.bandwidth {
        Some(b) => S::lit(b),
        None => S::lit(cfg.h_scale) * silverman_bandwidth(t_kernel)?,
    };
    let mask = Some(res.outlier_mask.as_slice());
    let one = |g0: &S| -> Result<PointFit<S>> {
        let window = KernelWindow::build(t_kernel, t_design, y, *g0, h, mask)?;
        let fit = if window.len() < cfg.min_window { None } else { fit_point(&window, method, cfg).ok() };
        Ok(PointFit { fit, window })
    };
    let points: Vec<PointFit<S>> = if cfg.parallel {
        grid.par_iter().map(one).collect::<Result<_>>()?
    } else {
        grid.iter().map(one).collect::<Result<_>>()?
    };

    let gsz = grid.len();
    let mut theta = vec![S::zero(); gsz];
    let mut intercepts = vec![S::zero(); gsz];
    let mut defined = vec![false; gsz];
    let mut weight_matrix = Matrix::filled(gsz, n, S::one());
    let mut visits = vec![0usize; n];
    let mut diagnostics = Vec::with_capacity(gsz);
    for (j, p) in points.iter().enumerate() {
        let mass = p.window.outlier_mass();
        let a5 = mass.is_some_and(|m| m > S::lit(0.5));
        match &p.fit {
            Some(f) => {
                theta[j] = f.slope();
                intercepts[j] = f.alpha;
                defined[j] = true;
                for (m, &i) in p.window.indices.iter().enumerate() {
                    let w = match (&winsor, method.is_uniform()) {
                        (Some(ws), _) => ws.score[i],
                        (None, true) => S::one(),
                        (None, false) => f.robust_weights[m],
                    };
                    weight_matrix.set(j, i, w);
                    visits[i] += 1;
                }
                diagnostics.push(GridDiagnostics {
                    window_size: p.window.len(),
                    defined: true,
                    outlier_mass: mass,
                    a5_violation: a5,
                    contraction_ratios: f.contraction_ratios.clone(),
                    inliers: f.inlier_mask.iter().filter(|&&v| v).count(),
                    converged: f.converged,
                });
            }
            None => diagnostics.push(GridDiagnostics {
                window_size: p.window.len(),
                defined: false,
                outlier_mass: mass,
                a5_violation: a5,
                contraction_ratios: Vec::new(),
                inliers: 0,
                converged: false,
            }),
        }
    }
    interpolate_undefined(&mut theta, &defined, &grid)?;
    interpolate_undefined(&mut intercepts, &defined, &grid)?;
    let g_curve = integrate_and_anchor(&theta, &intercepts, &grid)?;
    let sample_scores = (0..n)
        .map(|i| {
            let col: S = (0..gsz).map(|j| weight_matrix.get(j, i)).sum();
            match cfg.score_mode {
                ScoreMode::AllGridPoints => col / S::from_count(gsz),
                ScoreMode::VisitedOnly if visits[i] == 0 => S::one(),
                ScoreMode::VisitedOnly => {
                    (col - S::from_count(gsz - visits[i])) / S::from_count(visits[i])
                }
            }
        })
        .collect();
    Ok(AdrfEstimate {
        grid,
        theta,
        intercepts,
        g_curve,
        defined,
        weight_matrix,
        sample_scores,
        uniform_weights: method.is_uniform(),
        bandwidth: h,
        diagnostics,
    })
}

/// Second stage of the vector-treatment estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SurfaceMethod {
    /// Kernel-weighted OLS.
    Ols,
    /// Annealed Welsch fit with post-annealing refit.
    Shift,
}

impl fmt::Display for SurfaceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurfaceMethod::Ols => "standard_dml",
            SurfaceMethod::Shift => "shift",
        })
    }
}

/// Estimated dose-response surface on a tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceEstimate<S> {
    pub axes: Vec<Vec<S>>,
    /// Grid points, one row each, in row-major order over `axes`.
    pub points: Matrix<S>,
    /// Local intercepts (surface levels up to a constant).
    pub level: Vec<S>,
    pub defined: Vec<bool>,
    pub bandwidth: Vec<S>,
}

impl<S: Scalar> SurfaceEstimate<S> {
    /// RMSE between the grid-mean-centered estimate and truth.
    pub fn centered_rmse(&self, truth: impl Fn(&[S]) -> S) -> S {
        let tr: Vec<S> = (0..self.points.nrows()).map(|i| truth(self.points.row(i))).collect();
        let (me, mt) = (stats::mean(&self.level), stats::mean(&tr));
        let sq: S = self.level.iter().zip(&tr).map(|(&e, &t)| (e - me - (t - mt)).powi(2)).sum();
        (sq / S::from_count(tr.len())).sqrt()
    }
}

/// Points per axis of the surface grid.
pub fn surface_grid_size(d: usize) -> usize {
    if d <= 2 {
        15
    } else {
        9
    }
}

/// Product-kernel local-linear surface estimate for a 2- or 3-dimensional treatment.
pub fn fit_adrf_multid<S: Scalar>(
    res: &MultiResidualized<S>,
    method: SurfaceMethod,
    cfg: &AdrfConfig,
) -> Result<SurfaceEstimate<S>> {
    let d = res.t_raw.ncols();
    if !(2..=3).contains(&d) {
        return Err(invalid(format!("treatment dimension {d} outside {{2, 3}}")));
    }
    let per_axis = surface_grid_size(d);
    let mut axes = Vec::with_capacity(d);
    let mut h = Vec::with_capacity(d);
    for j in 0..d {
        let col = res.t_raw.col(j);
        axes.push(make_grid(&col, per_axis)?);
        h.push(S::lit(cfg.h_scale) * silverman_bandwidth(&col)?);
    }
    let total = per_axis.pow(d as u32);
    let mut pts = Vec::with_capacity(total * d);
    for flat in 0..total {
        let mut rem = flat;
        let mut coord = vec![S::zero(); d];
        for j in (0..d).rev() {
            coord[j] = axes[j][rem % per_axis];
            rem /= per_axis;
        }
        pts.extend(coord);
    }
    let points = Matrix::new(total, d, pts)?;
    let gnc = GncConfig { scale_source: ScaleSource::PostGncMad, ..cfg.gnc.clone() };
    let one = |k: usize| -> Option<S> {
        let window = KernelWindow::build_product(&res.t_raw, &res.t_raw, &res.y_tilde, points.row(k), &h, None).ok()?;
        if window.len() < cfg.min_window.max(d + 2) {
            return None;
        }
        let fit = match method {
            SurfaceMethod::Ols => second_stage_ols(&window).ok()?,
            SurfaceMethod::Shift => {
                let f = crate::smoothers::gnc_fit(&window, &gnc).ok()?;
                defensive_refit(&f, &window, &gnc)
            }
        };
        Some(fit.alpha)
    };
    let fitted: Vec<Option<S>> = if cfg.parallel {
        (0..total).into_par_iter().map(one).collect()
    } else {
        (0..total).map(one).collect()
    };
    let defined: Vec<bool> = fitted.iter().map(Option::is_some).collect();
    let mut level: Vec<S> = fitted.iter().map(|v| v.unwrap_or(S::zero())).collect();
    fill_tensor(&mut level, &defined, per_axis, d)?;
    Ok(SurfaceEstimate { axes, points, level, defined, bandwidth: h })
}

/// Fills undefined tensor-grid cells with the mean of their filled axis neighbours,
/// sweeping until every cell is filled.
fn fill_tensor<S: Scalar>(values: &mut [S], defined: &[bool], per_axis: usize, d: usize) -> Result<()> {
    if !defined.iter().any(|&v| v) {
        return Err(AdrfError::Estimation("no surface grid point could be fitted".into()));
    }
    let mut filled = defined.to_vec();
    while filled.iter().any(|&v| !v) {
        let snapshot = filled.clone();
        for k in 0..values.len() {
            if snapshot[k] {
                continue;
            }
            let mut sum = S::zero();
            let mut cnt = 0usize;
            let mut stride = 1;
            for _ in 0..d {
                let pos = (k / stride) % per_axis;
                if pos > 0 && snapshot[k - stride] {
                    sum = sum + values[k - stride];
                    cnt += 1;
                }
                if pos + 1 < per_axis && snapshot[k + stride] {
                    sum = sum + values[k + stride];
                    cnt += 1;
                }
                stride *= per_axis;
            }
            if cnt > 0 {
                values[k] = sum / S::from_count(cnt);
                filled[k] = true;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integration_examples() {
        let g: Vec<f64> = integrate_and_anchor(&[0.0, 2.0, 4.0], &[0.0, 0.0, 0.0], &[0.0, 1.0, 2.0]).unwrap();
        let expect = [-5.0 / 3.0, -2.0 / 3.0, 7.0 / 3.0];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let flat = integrate_and_anchor(&[0.0; 4], &[2.5; 4], &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(flat.iter().all(|&v| (v - 2.5f64).abs() < 1e-15));
    }

    #[test]
    fn derivative_examples() {
        let grid: Vec<f64> = (0..11).map(|i| i as f64 * 0.2).collect();
        let lin: Vec<f64> = grid.iter().map(|t| 3.0 * t + 1.0).collect();
        assert!(derivative_on_grid(&lin, &grid).unwrap().iter().all(|d| (d - 3.0).abs() < 1e-12));
        let quad: Vec<f64> = grid.iter().map(|t| t * t).collect();
        let d = derivative_on_grid(&quad, &grid).unwrap();
        for i in 1..10 {
            assert!((d[i] - 2.0 * grid[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_examples() {
        let t: Vec<f64> = (0..=1000).map(|i| -2.0 + 4.0 * i as f64 / 1000.0).collect();
        let g = make_grid(&t, 40).unwrap();
        assert!((g[0] + 1.8).abs() < 1e-9 && (g[39] - 1.8).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let two = make_grid(&t, 2).unwrap();
        assert_eq!(two.len(), 2);
        assert!(make_grid(&t, 1).is_err());
    }

    #[test]
    fn interpolation_clamps_and_fills() {
        let grid = [0.0, 1.0, 2.0, 3.0, 4.0];
        let mut v = [0.0, 1.0, 0.0, 5.0, 0.0];
        interpolate_undefined(&mut v, &[false, true, false, true, false], &grid).unwrap();
        assert_eq!(v, [1.0, 1.0, 3.0, 5.0, 5.0]);
        assert!(interpolate_undefined(&mut v, &[false; 5], &grid).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in MethodKind::ALL {
            assert_eq!(m.name().parse::<MethodKind>().unwrap(), m);
        }
        let uniform: Vec<_> = MethodKind::ALL.into_iter().filter(|m| m.is_uniform()).collect();
        assert_eq!(uniform.len(), 4);
    }
}
