//! Output record schemas and CSV persistence.

use std::cmp::Ordering;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Keeps finite values; anything else becomes an empty field.
pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Error text safe for the unquoted CSV dialect.
pub fn clean_message(msg: &str) -> String {
    msg.chars()
        .map(|c| match c {
            ',' => ';',
            '"' | '\n' | '\r' => ' ',
            c => c,
        })
        .collect()
}

/// `k=v` pairs joined by `;`, in the given order.
pub fn extra(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

/// One fit of one method on one seed of one cell.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultRow {
    pub preset: String,
    pub method: String,
    pub dgp: String,
    pub p_contam: f64,
    pub seed: u64,
    pub n: usize,
    /// Cell parameters beyond (dgp, p, method) as `k=v;k=v`.
    pub extra: String,
    pub rmse_level: Option<f64>,
    pub mae_level: Option<f64>,
    pub sup_err: Option<f64>,
    pub mase_deriv: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub walltime_s: Option<f64>,
    pub walltime_sd: Option<f64>,
    /// Fraction of grid points whose window is majority outlier.
    pub a5_frac: Option<f64>,
    pub coverage: Option<f64>,
    pub ci_width: Option<f64>,
    pub contraction_median: Option<f64>,
    pub status: String,
    pub error: String,
}

impl ResultRow {
    pub fn new(preset: &str, method: &str, dgp: &str, p: f64, seed: u64, n: usize, extra: String) -> Self {
        Self {
            preset: preset.into(),
            method: method.into(),
            dgp: dgp.into(),
            p_contam: p,
            seed,
            n,
            extra,
            status: "ok".into(),
            ..Self::default()
        }
    }

    pub fn failed(mut self, msg: &str) -> Self {
        self.status = "error".into();
        self.error = clean_message(msg);
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn canonical_cmp(&self, o: &Self) -> Ordering {
        (&self.preset, &self.dgp)
            .cmp(&(&o.preset, &o.dgp))
            .then(cmp_f64(self.p_contam, o.p_contam))
            .then((&self.extra, &self.method, self.seed).cmp(&(&o.extra, &o.method, o.seed)))
    }
}

/// Estimated and true curve at one grid point, both centered by their grid means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub preset: String,
    pub dgp: String,
    pub method: String,
    pub p_contam: f64,
    pub seed: u64,
    pub extra: String,
    pub grid_index: usize,
    pub t: f64,
    pub estimate: f64,
    pub truth: f64,
}

impl CurveRow {
    pub fn canonical_cmp(&self, o: &Self) -> Ordering {
        (&self.preset, &self.dgp)
            .cmp(&(&o.preset, &o.dgp))
            .then(cmp_f64(self.p_contam, o.p_contam))
            .then((&self.extra, &self.method, self.seed, self.grid_index).cmp(&(
                &o.extra,
                &o.method,
                o.seed,
                o.grid_index,
            )))
    }
}

/// One tail estimator on one residual sample.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TailRow {
    pub preset: String,
    pub dgp: String,
    pub p_contam: f64,
    pub seed: u64,
    pub source: String,
    /// hill, gpd_mle, gpd_pwm, gev, mean_excess or causal_tail_coefficient.
    pub estimator: String,
    /// Tail index for Hill, shape for the GPD/GEV/mean-excess rows, coefficient for the last.
    pub estimate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub sigma: Option<f64>,
    pub mu: Option<f64>,
    pub threshold: Option<f64>,
    pub tail_n: Option<usize>,
    pub status: String,
    pub error: String,
}

/// Estimator order of the tail report.
pub const TAIL_ESTIMATORS: [&str; 6] = ["hill", "gpd_mle", "gpd_pwm", "gev", "mean_excess", "causal_tail_coefficient"];

impl TailRow {
    pub fn canonical_cmp(&self, o: &Self) -> Ordering {
        let rank = |e: &str| TAIL_ESTIMATORS.iter().position(|&x| x == e).unwrap_or(usize::MAX);
        (&self.preset, &self.dgp)
            .cmp(&(&o.preset, &o.dgp))
            .then(cmp_f64(self.p_contam, o.p_contam))
            .then((self.seed, rank(&self.estimator)).cmp(&(o.seed, rank(&o.estimator))))
    }
}

/// A point of one diagnostic curve of the tail panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCurveRow {
    pub dgp: String,
    pub p_contam: f64,
    pub seed: u64,
    /// residual, mean_excess, stability or return_level.
    pub curve: String,
    pub index: usize,
    pub x: f64,
    pub y: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl TailCurveRow {
    pub fn canonical_cmp(&self, o: &Self) -> Ordering {
        self.dgp
            .cmp(&o.dgp)
            .then(cmp_f64(self.p_contam, o.p_contam))
            .then((self.seed, &self.curve, self.index).cmp(&(o.seed, &o.curve, o.index)))
    }
}

/// Estimator recommendation for one kind from seed-averaged tail statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub dgp: String,
    pub p_contam: f64,
    pub seeds_used: usize,
    pub xi_mle: Option<f64>,
    pub hill_alpha: Option<f64>,
    pub gamma_ctc: Option<f64>,
    pub domain: String,
    pub t_dependent: bool,
    pub recommended: String,
    pub ambiguous: bool,
}

/// Conditional-effect error of one X-learner fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RxRow {
    pub preset: String,
    pub method: String,
    pub p_contam: f64,
    pub seed: u64,
    pub n: usize,
    pub cate_rmse: Option<f64>,
    pub status: String,
    pub error: String,
}

impl RxRow {
    pub fn canonical_cmp(&self, o: &Self) -> Ordering {
        cmp_f64(self.p_contam, o.p_contam).then((&self.method, self.seed).cmp(&(&o.method, o.seed)))
    }
}

/// Serializes records with a header row (also for an empty set).
pub fn to_csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| BenchError::Io(e.into_error()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    std::fs::write(path, to_csv_bytes(rows, header)?)?;
    Ok(())
}

/// Reads records, reporting the expected columns when the header does not match.
pub fn read_csv<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != header {
        return Err(BenchError::Schema(format!(
            "{} has columns [{}]; expected [{}]",
            path.display(),
            got.join(","),
            header.join(",")
        )));
    }
    r.deserialize().map(|row| row.map_err(BenchError::from)).collect()
}

pub const RESULT_HEADER: [&str; 24] = [
    "preset", "method", "dgp", "p_contam", "seed", "n", "extra", "rmse_level", "mae_level", "sup_err", "mase_deriv",
    "precision", "recall", "f1", "roc_auc", "pr_auc", "walltime_s", "walltime_sd", "a5_frac", "coverage", "ci_width",
    "contraction_median", "status", "error",
];

pub const CURVE_HEADER: [&str; 10] =
    ["preset", "dgp", "method", "p_contam", "seed", "extra", "grid_index", "t", "estimate", "truth"];
pub const TAIL_HEADER: [&str; 15] = [
    "preset", "dgp", "p_contam", "seed", "source", "estimator", "estimate", "ci_low", "ci_high", "sigma", "mu",
    "threshold", "tail_n", "status", "error",
];
pub const TAIL_CURVE_HEADER: [&str; 9] = ["dgp", "p_contam", "seed", "curve", "index", "x", "y", "lo", "hi"];
pub const DECISION_HEADER: [&str; 10] = [
    "dgp", "p_contam", "seeds_used", "xi_mle", "hill_alpha", "gamma_ctc", "domain", "t_dependent", "recommended",
    "ambiguous",
];
pub const RX_HEADER: [&str; 8] = ["preset", "method", "p_contam", "seed", "n", "cate_rmse", "status", "error"];
