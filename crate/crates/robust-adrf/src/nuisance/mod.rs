//! Cross-fitted nuisance regressions `E[Y|X]` and `E[T|X]` producing orthogonalized
//! residuals, with random folds for cross-sectional data and buffered contiguous
//! blocks for time series.

mod gbt;
mod linear;

use std::fmt;
use std::ops::Range;

use rand::seq::SliceRandom;
use rayon::prelude::*;

pub use gbt::{GbtLoss, GbtModel, GbtParams, Tree};
pub use linear::{LassoModel, RidgeModel, Standardizer, LASSO_TOL};

use crate::dgp::{Dataset, MultiDataset, TimeSeriesDataset};
use crate::error::{degenerate, invalid, AdrfError, Result};
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::Scalar;

/// Anything that can be trained on one design and predict another.
pub trait Regressor<S: Scalar>: Sync {
    fn fit_predict(&self, x_train: &Matrix<S>, y_train: &[S], x_test: &Matrix<S>) -> Result<Vec<S>>;
}

/// Built-in nuisance learners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerKind {
    Ridge { lambda: f64 },
    Lasso { lambda: f64 },
    Gbt(GbtParams),
}

impl Default for LearnerKind {
    fn default() -> Self {
        LearnerKind::Gbt(GbtParams::default())
    }
}

impl LearnerKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerKind::Ridge { lambda } | LearnerKind::Lasso { lambda } => {
                if *lambda >= 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("penalty must be finite and non-negative"))
                }
            }
            LearnerKind::Gbt(p) => p.validate(),
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerKind::Ridge { lambda } => write!(f, "ridge(lambda={lambda})"),
            LearnerKind::Lasso { lambda } => write!(f, "lasso(lambda={lambda})"),
            LearnerKind::Gbt(p) => {
                let loss = match p.loss {
                    GbtLoss::Squared => "squared",
                    GbtLoss::Absolute => "absolute",
                };
                write!(f, "gbt({loss};trees={};depth={};rate={})", p.trees, p.depth, p.rate)
            }
        }
    }
}

impl<S: Scalar> Regressor<S> for LearnerKind {
    fn fit_predict(&self, x_train: &Matrix<S>, y_train: &[S], x_test: &Matrix<S>) -> Result<Vec<S>> {
        self.validate()?;
        if x_train.nrows() != y_train.len() || x_train.ncols() != x_test.ncols() {
            return Err(invalid("inconsistent learner input shapes"));
        }
        if y_train.len() < 2 {
            return Err(invalid("learner needs at least two training rows"));
        }
        if !x_train.all_finite() || !x_test.all_finite() || !y_train.iter().all(|v| v.is_finite()) {
            return Err(AdrfError::NonFinite("learner input".into()));
        }
        match self {
            LearnerKind::Ridge { lambda } => Ok(RidgeModel::fit(x_train, y_train, *lambda)?.predict(x_test)),
            LearnerKind::Lasso { lambda } => Ok(LassoModel::fit(x_train, y_train, *lambda)?.predict(x_test)),
            LearnerKind::Gbt(p) => Ok(GbtModel::fit(x_train, y_train, p)?.predict(x_test)),
        }
    }
}

/// Free-function form of [`Regressor::fit_predict`] for the built-in learners.
pub fn fit_predict_learner<S: Scalar>(
    learner: &LearnerKind,
    x_train: &Matrix<S>,
    y_train: &[S],
    x_test: &Matrix<S>,
) -> Result<Vec<S>> {
    learner.fit_predict(x_train, y_train, x_test)
}

/// Orthogonalized residuals for a scalar treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct Residualized<S> {
    pub y_tilde: Vec<S>,
    pub t_tilde: Vec<S>,
    /// Fold label in `1..=K` for each sample.
    pub fold_id: Vec<usize>,
    pub t_raw: Vec<S>,
    pub y_raw: Vec<S>,
    pub outlier_mask: Vec<bool>,
}

impl<S: Scalar> Residualized<S> {
    pub fn n(&self) -> usize {
        self.y_tilde.len()
    }

    /// Identity residualization (no nuisance adjustment), as used by the naive smoother.
    pub fn raw(t: &[S], y: &[S], outlier_mask: &[bool]) -> Self {
        Self {
            y_tilde: y.to_vec(),
            t_tilde: t.to_vec(),
            fold_id: vec![1; t.len()],
            t_raw: t.to_vec(),
            y_raw: y.to_vec(),
            outlier_mask: outlier_mask.to_vec(),
        }
    }
}

/// Orthogonalized residuals for a vector treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiResidualized<S> {
    pub y_tilde: Vec<S>,
    pub t_tilde: Matrix<S>,
    pub fold_id: Vec<usize>,
    pub t_raw: Matrix<S>,
    pub outlier_mask: Vec<bool>,
}

/// Seeded random partition into `k` near-equal folds labelled `1..=k`: a uniform
/// shuffle followed by contiguous chunks (the first `n mod k` chunks get one extra).
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(invalid(format!("K = {k}; at least two folds are required")));
    }
    if n < 5 * k {
        return Err(invalid(format!("n = {n} below 5K = {}", 5 * k)));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "folds", 0));
    let base = n / k;
    let extra = n % k;
    let mut fold = vec![0; n];
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        if size < 2 {
            return Err(degenerate(format!("fold {} has fewer than two samples", f + 1)));
        }
        for &i in &order[at..at + size] {
            fold[i] = f + 1;
        }
        at += size;
    }
    Ok(fold)
}

/// Out-of-fold predictions of each target column given explicit train/test index sets.
fn out_of_fold<S: Scalar, L: Regressor<S>>(
    x: &Matrix<S>,
    targets: &[&[S]],
    splits: &[(Vec<usize>, Vec<usize>)],
    learner: &L,
) -> Result<Vec<Vec<S>>> {
    let n = x.nrows();
    let jobs: Vec<(usize, usize)> =
        (0..splits.len()).flat_map(|f| (0..targets.len()).map(move |c| (f, c))).collect();
    let preds: Vec<Result<Vec<S>>> = jobs
        .par_iter()
        .map(|&(f, c)| {
            let (train, test) = &splits[f];
            let xt = x.select_rows(train);
            let yt: Vec<S> = train.iter().map(|&i| targets[c][i]).collect();
            learner.fit_predict(&xt, &yt, &x.select_rows(test))
        })
        .collect();
    let mut out = vec![vec![S::nan(); n]; targets.len()];
    for (&(f, c), pred) in jobs.iter().zip(preds) {
        let pred = pred?;
        for (&i, v) in splits[f].1.iter().zip(pred) {
            out[c][i] = v;
        }
    }
    Ok(out)
}

fn random_splits(fold: &[usize], k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    (1..=k)
        .map(|f| {
            let test: Vec<usize> = (0..fold.len()).filter(|&i| fold[i] == f).collect();
            let train: Vec<usize> = (0..fold.len()).filter(|&i| fold[i] != f).collect();
            (train, test)
        })
        .collect()
}

/// Cross-fitted residuals `y - m_Y(x)` and `t - m_T(x)` on explicit arrays.
pub fn crossfit_arrays<S: Scalar, L: Regressor<S>>(
    x: &Matrix<S>,
    t: &[S],
    y: &[S],
    outlier_mask: &[bool],
    learner: &L,
    k: usize,
    seed: u64,
) -> Result<Residualized<S>> {
    let n = y.len();
    if x.nrows() != n || t.len() != n || outlier_mask.len() != n {
        return Err(invalid("inconsistent dataset lengths"));
    }
    let fold = fold_assignment(n, k, seed)?;
    let preds = out_of_fold(x, &[y, t], &random_splits(&fold, k), learner)?;
    Ok(Residualized {
        y_tilde: y.iter().zip(&preds[0]).map(|(&a, &b)| a - b).collect(),
        t_tilde: t.iter().zip(&preds[1]).map(|(&a, &b)| a - b).collect(),
        fold_id: fold,
        t_raw: t.to_vec(),
        y_raw: y.to_vec(),
        outlier_mask: outlier_mask.to_vec(),
    })
}

/// Cross-fitted residualization of a cross-sectional dataset.
pub fn crossfit_residualize<S: Scalar, L: Regressor<S>>(
    ds: &Dataset<S>,
    learner: &L,
    k: usize,
    seed: u64,
) -> Result<Residualized<S>> {
    crossfit_arrays(&ds.x, &ds.t, &ds.y, &ds.outlier_mask, learner, k, seed)
}

/// Cross-fitted residualization with one treatment model per treatment column.
pub fn crossfit_residualize_multi<S: Scalar, L: Regressor<S>>(
    ds: &MultiDataset<S>,
    learner: &L,
    k: usize,
    seed: u64,
) -> Result<MultiResidualized<S>> {
    let n = ds.y.len();
    let fold = fold_assignment(n, k, seed)?;
    let cols: Vec<Vec<S>> = (0..ds.dim()).map(|j| ds.t.col(j)).collect();
    let mut targets: Vec<&[S]> = vec![&ds.y];
    targets.extend(cols.iter().map(Vec::as_slice));
    let preds = out_of_fold(&ds.x, &targets, &random_splits(&fold, k), learner)?;
    let d = ds.dim();
    let mut t_tilde = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            t_tilde.set(i, j, ds.t.get(i, j) - preds[j + 1][i]);
        }
    }
    Ok(MultiResidualized {
        y_tilde: ds.y.iter().zip(&preds[0]).map(|(&a, &b)| a - b).collect(),
        t_tilde,
        fold_id: fold,
        t_raw: ds.t.clone(),
        outlier_mask: ds.outlier_mask.clone(),
    })
}

/// One contiguous test block and its buffered training set.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFold {
    pub test: Range<usize>,
    pub train: Vec<usize>,
}

/// Contiguous time blocks; each block's training set excludes the block itself and
/// `buffer` timestamps on either side of it.
pub fn block_folds(n: usize, k: usize, buffer: usize) -> Result<Vec<BlockFold>> {
    if k < 2 {
        return Err(invalid(format!("K = {k}; at least two folds are required")));
    }
    if n / k < 2 {
        return Err(degenerate("blocks would hold fewer than two samples"));
    }
    let base = n / k;
    let extra = n % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let test = start..start + size;
        let lo = test.start.saturating_sub(buffer);
        let hi = (test.end + buffer).min(n);
        let train: Vec<usize> = (0..n).filter(|&i| i < lo || i >= hi).collect();
        if train.len() < 2 {
            return Err(degenerate(format!("buffer {buffer} leaves no training data for block {}", f + 1)));
        }
        out.push(BlockFold { test, train });
        start += size;
    }
    Ok(out)
}

/// Block cross-fitted residualization of a time series. Learners are deterministic,
/// so `_seed` only keeps the signature aligned with the cross-sectional variant.
pub fn block_crossfit_residualize<S: Scalar, L: Regressor<S>>(
    ds: &TimeSeriesDataset<S>,
    learner: &L,
    k: usize,
    buffer: usize,
    _seed: u64,
) -> Result<Residualized<S>> {
    let n = ds.y.len();
    let blocks = block_folds(n, k, buffer)?;
    let mut fold = vec![0; n];
    for (f, b) in blocks.iter().enumerate() {
        for i in b.test.clone() {
            fold[i] = f + 1;
        }
    }
    let splits: Vec<(Vec<usize>, Vec<usize>)> =
        blocks.into_iter().map(|b| (b.train, b.test.collect())).collect();
    let preds = out_of_fold(&ds.x, &[&ds.y, &ds.t], &splits, learner)?;
    Ok(Residualized {
        y_tilde: ds.y.iter().zip(&preds[0]).map(|(&a, &b)| a - b).collect(),
        t_tilde: ds.t.iter().zip(&preds[1]).map(|(&a, &b)| a - b).collect(),
        fold_id: fold,
        t_raw: ds.t.clone(),
        y_raw: ds.y.clone(),
        outlier_mask: ds.outlier_mask.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_sizes_are_near_equal() {
        let fold = fold_assignment(800, 3, 11).unwrap();
        let mut sizes: Vec<usize> = (1..=3).map(|f| fold.iter().filter(|&&v| v == f).count()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![266, 267, 267]);
    }

    #[test]
    fn fold_preconditions() {
        assert!(fold_assignment(100, 1, 0).is_err());
        assert!(fold_assignment(14, 3, 0).is_err());
    }

    #[test]
    fn block_folds_without_buffer_train_on_the_other_block() {
        let b = block_folds(10, 2, 0).unwrap();
        assert_eq!(b[0].test, 0..5);
        assert_eq!(b[0].train, (5..10).collect::<Vec<_>>());
    }

    #[test]
    fn block_folds_exclude_buffer() {
        let b = block_folds(1000, 4, 5).unwrap();
        let f = &b[1];
        assert_eq!(f.test, 250..500);
        for i in 245..505 {
            assert!(!f.train.contains(&i));
        }
        assert!(f.train.contains(&244) && f.train.contains(&505));
        assert!(block_folds(10, 2, 10).is_err());
    }
}
