//! Penalized linear learners on standardized features.

use crate::error::{degenerate, invalid, Result};
use crate::linalg::{solve, Matrix};
use crate::scalar::Scalar;
use crate::stats;

/// Column centering and scaling (population standard deviation). Constant columns
/// are kept centered but never scaled, and receive a zero coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<S> {
    pub mean: Vec<S>,
    pub scale: Vec<S>,
    pub active: Vec<bool>,
}

impl<S: Scalar> Standardizer<S> {
    pub fn fit(x: &Matrix<S>) -> Self {
        let n = S::from_count(x.nrows());
        let p = x.ncols();
        let mut mean = vec![S::zero(); p];
        for i in 0..x.nrows() {
            for (m, &v) in mean.iter_mut().zip(x.row(i)) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / n);
        let mut var = vec![S::zero(); p];
        for i in 0..x.nrows() {
            for (j, &v) in x.row(i).iter().enumerate() {
                var[j] = var[j] + (v - mean[j]) * (v - mean[j]);
            }
        }
        let scale: Vec<S> = var.iter().map(|&v| (v / n).sqrt()).collect();
        let active = scale.iter().map(|&s| s > S::epsilon()).collect();
        Self { mean, scale, active }
    }

    /// Standardized copy; inactive columns are zeroed.
    pub fn transform(&self, x: &Matrix<S>) -> Matrix<S> {
        let mut out = x.clone();
        for i in 0..out.nrows() {
            let row = out.row_mut(i);
            for j in 0..row.len() {
                row[j] = if self.active[j] { (row[j] - self.mean[j]) / self.scale[j] } else { S::zero() };
            }
        }
        out
    }
}

/// Ridge regression solving `(Z'Z + lambda I) b = Z' (y - mean(y))` on standardized `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel<S> {
    pub standardizer: Standardizer<S>,
    /// Coefficients on the standardized scale.
    pub coef: Vec<S>,
    pub intercept: S,
}

impl<S: Scalar> RidgeModel<S> {
    pub fn fit(x: &Matrix<S>, y: &[S], lambda: f64) -> Result<Self> {
        if lambda < 0.0 {
            return Err(invalid("ridge lambda must be non-negative"));
        }
        let st = Standardizer::fit(x);
        let z = st.transform(x);
        let p = z.ncols();
        let ybar = stats::mean(y);
        let mut a = vec![S::zero(); p * p];
        let mut b = vec![S::zero(); p];
        for i in 0..z.nrows() {
            let row = z.row(i);
            let yc = y[i] - ybar;
            for j in 0..p {
                b[j] = b[j] + row[j] * yc;
                for k in j..p {
                    a[j * p + k] = a[j * p + k] + row[j] * row[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                a[j * p + k] = a[k * p + j];
            }
            // Inactive columns are all-zero; a unit diagonal pins their coefficient at 0.
            a[j * p + j] = a[j * p + j] + if st.active[j] { S::lit(lambda) } else { S::one() };
        }
        let coef = if p == 0 { Vec::new() } else { solve(&a, &b, p)? };
        Ok(Self { standardizer: st, coef, intercept: ybar })
    }

    pub fn predict(&self, x: &Matrix<S>) -> Vec<S> {
        linear_predict(&self.standardizer, &self.coef, self.intercept, x)
    }
}

fn linear_predict<S: Scalar>(st: &Standardizer<S>, coef: &[S], intercept: S, x: &Matrix<S>) -> Vec<S> {
    let z = st.transform(x);
    (0..z.nrows())
        .map(|i| intercept + z.row(i).iter().zip(coef).map(|(&a, &b)| a * b).sum::<S>())
        .collect()
}

/// Lasso fitted by cyclic coordinate descent on `0.5 |y - Zb|^2 / n + lambda |b|_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoModel<S> {
    pub standardizer: Standardizer<S>,
    /// Coefficients on the standardized scale.
    pub coef: Vec<S>,
    pub intercept: S,
    pub sweeps: usize,
}

/// Convergence tolerance on the largest coefficient change in a sweep.
pub const LASSO_TOL: f64 = 1e-7;
const LASSO_MAX_SWEEPS: usize = 100_000;

fn soft_threshold<S: Scalar>(v: S, lambda: S) -> S {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        S::zero()
    }
}

impl<S: Scalar> LassoModel<S> {
    pub fn fit(x: &Matrix<S>, y: &[S], lambda: f64) -> Result<Self> {
        if lambda < 0.0 {
            return Err(invalid("lasso lambda must be non-negative"));
        }
        let st = Standardizer::fit(x);
        let z = st.transform(x);
        let (n, p) = (z.nrows(), z.ncols());
        let nn = S::from_count(n);
        let lam = S::lit(lambda);
        let ybar = stats::mean(y);
        let mut resid: Vec<S> = y.iter().map(|&v| v - ybar).collect();
        let mut coef = vec![S::zero(); p];
        let cols: Vec<Vec<S>> = (0..p).map(|j| z.col(j)).collect();
        // Column norms equal one under population scaling, but compute them for safety.
        let norms: Vec<S> = cols.iter().map(|c| c.iter().map(|&v| v * v).sum::<S>() / nn).collect();
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let mut max_delta = S::zero();
            for j in 0..p {
                if !st.active[j] || norms[j] == S::zero() {
                    continue;
                }
                let old = coef[j];
                let rho = cols[j].iter().zip(&resid).map(|(&a, &r)| a * r).sum::<S>() / nn + norms[j] * old;
                let new = soft_threshold(rho, lam) / norms[j];
                let delta = new - old;
                if delta != S::zero() {
                    for (r, &a) in resid.iter_mut().zip(&cols[j]) {
                        *r = *r - a * delta;
                    }
                    coef[j] = new;
                }
                max_delta = max_delta.max(delta.abs());
            }
            if max_delta < S::lit(LASSO_TOL) {
                break;
            }
            if sweeps >= LASSO_MAX_SWEEPS {
                return Err(degenerate("lasso coordinate descent did not converge"));
            }
        }
        Ok(Self { standardizer: st, coef, intercept: ybar, sweeps })
    }

    pub fn predict(&self, x: &Matrix<S>) -> Vec<S> {
        linear_predict(&self.standardizer, &self.coef, self.intercept, x)
    }
}
