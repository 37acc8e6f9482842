//! Per-cell summary statistics and markdown pivots of result tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::rows::ResultRow;

/// Metrics summarized by `summarize`, with whether larger is better.
pub const METRICS: [(&str, bool); 16] = [
    ("rmse_level", false),
    ("mae_level", false),
    ("sup_err", false),
    ("mase_deriv", false),
    ("precision", true),
    ("recall", true),
    ("f1", true),
    ("roc_auc", true),
    ("pr_auc", true),
    ("walltime_s", false),
    ("walltime_sd", false),
    ("a5_frac", false),
    ("coverage", true),
    ("ci_width", false),
    ("contraction_median", false),
    ("errors", false),
];

fn metric(row: &ResultRow, name: &str) -> Option<f64> {
    match name {
        "rmse_level" => row.rmse_level,
        "mae_level" => row.mae_level,
        "sup_err" => row.sup_err,
        "mase_deriv" => row.mase_deriv,
        "precision" => row.precision,
        "recall" => row.recall,
        "f1" => row.f1,
        "roc_auc" => row.roc_auc,
        "pr_auc" => row.pr_auc,
        "walltime_s" => row.walltime_s,
        "walltime_sd" => row.walltime_sd,
        "a5_frac" => row.a5_frac,
        "coverage" => row.coverage,
        "ci_width" => row.ci_width,
        "contraction_median" => row.contraction_median,
        "errors" => Some(if row.is_ok() { 0.0 } else { 1.0 }),
        _ => None,
    }
}

/// Mean, sample standard deviation and range of one metric over one cell's seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub preset: String,
    pub dgp: String,
    pub method: String,
    pub p_contam: f64,
    pub extra: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

pub const SUMMARY_HEADER: [&str; 11] =
    ["preset", "dgp", "method", "p_contam", "extra", "metric", "mean", "std", "min", "max", "count"];

/// Summary statistics of a sample; std is the n−1 form and 0 for a single value.
pub fn describe(v: &[f64]) -> Option<(f64, f64, f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((mean, std, min, max))
}

type Key = (String, String, String, u64, String);

/// Groups by (preset, dgp, method, p, extra) and summarizes every populated metric.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<Key, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.preset.clone(), r.dgp.clone(), r.method.clone(), r.p_contam.to_bits(), r.extra.clone());
        groups.entry(key).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((preset, dgp, method, p, extra), members) in groups {
        for (name, _) in METRICS {
            let vals: Vec<f64> = members.iter().filter_map(|r| metric(r, name)).filter(|v| v.is_finite()).collect();
            if let Some((mean, std, min, max)) = describe(&vals) {
                out.push(SummaryRow {
                    preset: preset.clone(),
                    dgp: dgp.clone(),
                    method: method.clone(),
                    p_contam: f64::from_bits(p),
                    extra: extra.clone(),
                    metric: name.into(),
                    mean,
                    std,
                    min,
                    max,
                    count: vals.len(),
                });
            }
        }
    }
    out.sort_by(|a, b| {
        (&a.preset, &a.extra, &a.metric, &a.dgp)
            .cmp(&(&b.preset, &b.extra, &b.metric, &b.dgp))
            .then(a.p_contam.total_cmp(&b.p_contam))
            .then(a.method.cmp(&b.method))
    });
    out
}

/// One markdown table per (preset, extra, metric): rows are (dgp, p), columns are
/// methods, cells read `mean ± std [min, max]`, the best mean per row in bold.
pub fn pivot_markdown(summary: &[SummaryRow]) -> String {
    let mut tables: BTreeMap<(String, String, String), Vec<&SummaryRow>> = BTreeMap::new();
    for s in summary {
        tables.entry((s.preset.clone(), s.extra.clone(), s.metric.clone())).or_default().push(s);
    }
    let order = |m: &str| METRICS.iter().position(|(n, _)| *n == m).unwrap_or(usize::MAX);
    let mut keys: Vec<_> = tables.keys().cloned().collect();
    keys.sort_by(|a, b| (&a.0, &a.1, order(&a.2)).cmp(&(&b.0, &b.1, order(&b.2))));
    let mut md = String::new();
    for key in keys {
        let cells = &tables[&key];
        let (preset, extra, name) = &key;
        let higher = METRICS.iter().find(|(n, _)| n == name).is_some_and(|m| m.1);
        let methods: BTreeSet<&str> = cells.iter().map(|s| s.method.as_str()).collect();
        let mut rows: Vec<(&str, f64)> = Vec::new();
        for s in cells.iter() {
            if !rows.iter().any(|&(d, p)| d == s.dgp && p == s.p_contam) {
                rows.push((&s.dgp, s.p_contam));
            }
        }
        rows.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)));
        let title = if extra.is_empty() { format!("{preset}: {name}") } else { format!("{preset} [{extra}]: {name}") };
        let _ = writeln!(md, "### {title}\n");
        let _ = writeln!(md, "| dgp | p | {} |", methods.iter().copied().collect::<Vec<_>>().join(" | "));
        let _ = writeln!(md, "|---|---|{}", "---|".repeat(methods.len()));
        for (dgp, p) in rows {
            let in_row: Vec<&&SummaryRow> = cells.iter().filter(|s| s.dgp == dgp && s.p_contam == p).collect();
            let best = in_row
                .iter()
                .map(|s| s.mean)
                .reduce(|a, b| if (b > a) == higher { b } else { a });
            let mut line = format!("| {dgp} | {p} |");
            for m in &methods {
                match in_row.iter().find(|s| s.method == *m) {
                    Some(s) => {
                        let text = format!("{:.3} ± {:.3} [{:.3}, {:.3}]", s.mean, s.std, s.min, s.max);
                        if methods.len() > 1 && Some(s.mean) == best {
                            let _ = write!(line, " **{text}** |");
                        } else {
                            let _ = write!(line, " {text} |");
                        }
                    }
                    None => line.push_str(" |"),
                }
            }
            let _ = writeln!(md, "{line}");
        }
        md.push('\n');
    }
    md
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, seed: u64, rmse: f64) -> ResultRow {
        let mut r = ResultRow::new("main_sweep", method, "parabola", 0.05, seed, 800, String::new());
        r.rmse_level = Some(rmse);
        r
    }

    fn rmse(summary: &[SummaryRow], method: &str) -> SummaryRow {
        summary.iter().find(|s| s.metric == "rmse_level" && s.method == method).unwrap().clone()
    }

    #[test]
    fn single_row_has_zero_spread() {
        let s = summarize(&[row("shift", 0, 0.25)]);
        let r = rmse(&s, "shift");
        assert_eq!((r.mean, r.std, r.min, r.max, r.count), (0.25, 0.0, 0.25, 0.25, 1));
    }

    #[test]
    fn two_rows_use_sample_std() {
        let r = rmse(&summarize(&[row("shift", 0, 0.2), row("shift", 1, 0.4)]), "shift");
        assert!((r.mean - 0.3).abs() < 1e-12);
        assert!((r.std - 0.1414).abs() < 1e-4);
        assert_eq!((r.min, r.max), (0.2, 0.4));
    }

    #[test]
    fn groups_split_on_extra_and_method() {
        let mut b = row("shift", 0, 0.3);
        b.extra = "gamma=0.1".into();
        let s = summarize(&[row("shift", 0, 0.2), b, row("gnc_fixed", 0, 0.5)]);
        assert_eq!(s.iter().filter(|r| r.metric == "rmse_level").count(), 3);
    }

    #[test]
    fn failed_rows_are_counted_not_averaged() {
        let bad = ResultRow::new("main_sweep", "shift", "parabola", 0.05, 1, 800, String::new()).failed("x");
        let s = summarize(&[row("shift", 0, 0.2), bad]);
        assert_eq!(rmse(&s, "shift").count, 1);
        let e = s.iter().find(|r| r.metric == "errors").unwrap();
        assert!((e.mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pivot_bolds_the_best_method_per_row() {
        let md = pivot_markdown(&summarize(&[row("shift", 0, 0.2), row("standard_dml", 0, 0.9)]));
        let line = md.lines().find(|l| l.starts_with("| parabola") && l.contains("0.200")).unwrap();
        assert!(line.contains("**0.200"));
        assert!(!line.contains("**0.900"));
    }
}
