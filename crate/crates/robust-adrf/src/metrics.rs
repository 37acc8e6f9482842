//! Curve-shape, derivative and outlier-detection metrics.

use crate::adrf::derivative_on_grid;
use crate::error::{degenerate, invalid, Result};
use crate::scalar::{total_cmp, Scalar};
use crate::smoothers::gaussian_kernel;
use crate::stats;

/// Level and derivative errors of an estimated curve against truth, both centered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeMetrics<S> {
    pub rmse_level: S,
    pub mae_level: S,
    pub sup_err: S,
    pub mase_deriv: S,
}

/// Centers both curves by their grid means and compares them; the derivative error
/// is scaled by the mean absolute first difference of the true derivative.
pub fn shape_metrics<S: Scalar>(est: &[S], truth: &[S], grid: &[S]) -> Result<ShapeMetrics<S>> {
    let g = grid.len();
    if g < 3 || est.len() != g || truth.len() != g {
        return Err(invalid("shape metrics need equal-length curves of length >= 3"));
    }
    stats::check_finite(est, "estimated curve")?;
    stats::check_finite(truth, "true curve")?;
    let (me, mt) = (stats::mean(est), stats::mean(truth));
    let diff: Vec<S> = est.iter().zip(truth).map(|(&e, &t)| (e - me) - (t - mt)).collect();
    let gf = S::from_count(g);
    let rmse_level = (diff.iter().map(|&d| d * d).sum::<S>() / gf).sqrt();
    let mae_level = diff.iter().map(|d| d.abs()).sum::<S>() / gf;
    let sup_err = diff.iter().fold(S::zero(), |m, d| m.max(d.abs()));
    let de = derivative_on_grid(est, grid)?;
    let dt = derivative_on_grid(truth, grid)?;
    let scale = dt.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<S>() / S::from_count(g - 1);
    if !(scale > S::zero()) {
        return Err(degenerate("true derivative is constant on the grid; MASE undefined"));
    }
    let mase_deriv = de.iter().zip(&dt).map(|(&a, &b)| (a - b).abs()).sum::<S>() / gf / scale;
    Ok(ShapeMetrics { rmse_level, mae_level, sup_err, mase_deriv })
}

/// Outlier-detection quality of per-sample scores (low score = suspected outlier).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionMetrics<S> {
    pub precision: S,
    pub recall: S,
    pub f1: S,
    /// Absent when the mask has a single class.
    pub roc_auc: Option<S>,
    pub pr_auc: Option<S>,
    /// Number of samples flagged at matched k.
    pub k: usize,
    /// `k = 0`, so precision, recall and F1 are reported as zero.
    pub k_zero: bool,
}

/// Matched-k flags: the `floor(p n)` lowest scores, ties by ascending index.
pub fn matched_k_flags<S: Scalar>(scores: &[S], p: f64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("fraction {p} outside [0, 1]")));
    }
    let n = scores.len();
    let k = (p * n as f64 + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| total_cmp(&scores[a], &scores[b]).then(a.cmp(&b)));
    let mut flags = vec![false; n];
    for &i in &order[..k] {
        flags[i] = true;
    }
    Ok(flags)
}

/// Precision, recall and F1 of the matched-k flags, plus the threshold-free rank
/// metrics when both classes are present.
pub fn detection_metrics<S: Scalar>(scores: &[S], mask: &[bool], p: f64) -> Result<DetectionMetrics<S>> {
    if scores.len() != mask.len() {
        return Err(invalid("scores and mask differ in length"));
    }
    stats::check_finite(scores, "scores")?;
    let flags = matched_k_flags(scores, p)?;
    let k = flags.iter().filter(|&&f| f).count();
    let positives = mask.iter().filter(|&&m| m).count();
    let tp = flags.iter().zip(mask).filter(|(&f, &m)| f && m).count();
    let ratio = |a: usize, b: usize| if b == 0 { S::zero() } else { S::from_count(a) / S::from_count(b) };
    let precision = ratio(tp, k);
    let recall = ratio(tp, positives);
    let f1 = if precision + recall > S::zero() {
        S::lit(2.0) * precision * recall / (precision + recall)
    } else {
        S::zero()
    };
    let (roc_auc, pr_auc) = match rank_curves(scores, mask) {
        Ok((r, a)) => (Some(r), Some(a)),
        Err(_) => (None, None),
    };
    Ok(DetectionMetrics { precision, recall, f1, roc_auc, pr_auc, k, k_zero: k == 0 })
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
fn average_ranks<S: Scalar>(v: &[S]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| total_cmp(&v[a], &v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// ROC-AUC (Mann-Whitney on negated scores) and step-wise average precision.
pub fn rank_curves<S: Scalar>(scores: &[S], mask: &[bool]) -> Result<(S, S)> {
    if scores.len() != mask.len() {
        return Err(invalid("scores and mask differ in length"));
    }
    let pos = mask.iter().filter(|&&m| m).count();
    let neg = mask.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(invalid("rank metrics need both outliers and inliers"));
    }
    let anomaly: Vec<S> = scores.iter().map(|&s| -s).collect();
    let ranks = average_ranks(&anomaly);
    let rank_sum: f64 = ranks.iter().zip(mask).filter(|(_, &m)| m).map(|(r, _)| r).sum();
    let (pf, nf) = (pos as f64, neg as f64);
    let roc = (rank_sum - pf * (pf + 1.0) / 2.0) / (pf * nf);

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| total_cmp(&scores[a], &scores[b]));
    let (mut tp, mut seen, mut prev_recall, mut ap) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &o in &order[i..=j] {
            seen += 1;
            tp += usize::from(mask[o]);
        }
        let recall = tp as f64 / pf;
        ap += (recall - prev_recall) * tp as f64 / seen as f64;
        prev_recall = recall;
        i = j + 1;
    }
    Ok((S::lit(roc), S::lit(ap)))
}

/// Kernel-weighted outlier mass in the window of each grid point.
pub fn outlier_mass_profile<S: Scalar>(t: &[S], mask: &[bool], grid: &[S], h: S) -> Result<Vec<S>> {
    if t.len() != mask.len() {
        return Err(invalid("treatment and mask differ in length"));
    }
    let floor = S::lit(crate::smoothers::KERNEL_FLOOR);
    grid.iter()
        .map(|&g0| {
            let (mut tot, mut bad) = (S::zero(), S::zero());
            for (&ti, &m) in t.iter().zip(mask) {
                let w = gaussian_kernel(ti - g0, h)?;
                if w > floor {
                    tot = tot + w;
                    if m {
                        bad = bad + w;
                    }
                }
            }
            Ok(if tot > S::zero() { bad / tot } else { S::zero() })
        })
        .collect()
}

/// Fraction of grid points whose kernel-weighted outlier mass exceeds one half.
pub fn a5_failure_rate<S: Scalar>(t: &[S], mask: &[bool], grid: &[S], h: S) -> Result<S> {
    if grid.is_empty() {
        return Err(invalid("empty grid"));
    }
    let prof = outlier_mass_profile(t, mask, grid, h)?;
    let bad = prof.iter().filter(|&&m| m > S::lit(0.5)).count();
    Ok(S::from_count(bad) / S::from_count(grid.len()))
}
