//! Small dense linear algebra: a row-major matrix, weighted least squares with a
//! condition-number guard, and a symmetric eigenvalue routine for the guard itself.

use crate::error::{degenerate, invalid, AdrfError, Result};
use crate::scalar::Scalar;

/// Condition number above which a weighted normal-equation system is rejected.
pub const MAX_CONDITION: f64 = 1e10;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, S::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: S) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged rows"));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    /// Single-column matrix.
    pub fn column(values: &[S]) -> Self {
        Self { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    pub fn col(&self, j: usize) -> Vec<S> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise cast into another scalar type.
    pub fn cast<T: Scalar>(&self) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| T::lit(v.as_f64())).collect(),
        }
    }
}

/// Eigenvalues of a symmetric `k x k` matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues<S: Scalar>(a: &[S], k: usize) -> Vec<S> {
    let mut m = a.to_vec();
    let two = S::lit(2.0);
    for _sweep in 0..100 {
        let mut off = S::zero();
        for p in 0..k {
            for q in (p + 1)..k {
                off = off + m[p * k + q] * m[p * k + q];
            }
        }
        if off <= S::epsilon() * S::epsilon() * diag_norm(&m, k) {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                let apq = m[p * k + q];
                if apq == S::zero() {
                    continue;
                }
                let theta = (m[q * k + q] - m[p * k + p]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for r in 0..k {
                    let arp = m[r * k + p];
                    let arq = m[r * k + q];
                    m[r * k + p] = c * arp - s * arq;
                    m[r * k + q] = s * arp + c * arq;
                }
                for r in 0..k {
                    let apr = m[p * k + r];
                    let aqr = m[q * k + r];
                    m[p * k + r] = c * apr - s * aqr;
                    m[q * k + r] = s * apr + c * aqr;
                }
            }
        }
    }
    (0..k).map(|i| m[i * k + i]).collect()
}

fn diag_norm<S: Scalar>(m: &[S], k: usize) -> S {
    (0..k).map(|i| m[i * k + i] * m[i * k + i]).sum::<S>().max(S::min_positive_value())
}

/// Ratio of the largest to smallest absolute eigenvalue of a symmetric matrix.
pub fn condition_number<S: Scalar>(a: &[S], k: usize) -> S {
    let ev = symmetric_eigenvalues(a, k);
    let max = ev.iter().fold(S::zero(), |m, v| m.max(v.abs()));
    let min = ev.iter().fold(S::infinity(), |m, v| m.min(v.abs()));
    if min == S::zero() {
        S::infinity()
    } else {
        max / min
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve<S: Scalar>(a: &[S], b: &[S], k: usize) -> Result<Vec<S>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| crate::scalar::total_cmp(&m[i * k + col].abs(), &m[j * k + col].abs()))
            .unwrap_or(col);
        if m[pivot * k + col] == S::zero() || !m[pivot * k + col].is_finite() {
            return Err(degenerate("singular linear system"));
        }
        if pivot != col {
            for j in 0..k {
                m.swap(pivot * k + j, col * k + j);
            }
            x.swap(pivot, col);
        }
        let d = m[col * k + col];
        for r in (col + 1)..k {
            let f = m[r * k + col] / d;
            if f == S::zero() {
                continue;
            }
            for j in col..k {
                m[r * k + j] = m[r * k + j] - f * m[col * k + j];
            }
            x[r] = x[r] - f * x[col];
        }
    }
    for col in (0..k).rev() {
        let mut acc = x[col];
        for j in (col + 1)..k {
            acc = acc - m[col * k + j] * x[j];
        }
        x[col] = acc / m[col * k + col];
    }
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(degenerate("non-finite solution"))
    }
}

/// Weighted least squares: minimizes `sum w_i (y_i - design_i . beta)^2`.
///
/// Rejects systems whose normal matrix has condition number above [`MAX_CONDITION`]
/// or fewer positively weighted rows than parameters.
pub fn weighted_least_squares<S: Scalar>(design: &Matrix<S>, y: &[S], w: &[S]) -> Result<Vec<S>> {
    let k = design.ncols();
    if design.nrows() != y.len() || y.len() != w.len() {
        return Err(invalid("weighted least squares: length mismatch"));
    }
    let positive = w.iter().filter(|&&v| v > S::zero()).count();
    if positive < k.max(2) {
        return Err(degenerate(format!("only {positive} positively weighted rows")));
    }
    let mut xtx = vec![S::zero(); k * k];
    let mut xty = vec![S::zero(); k];
    for i in 0..design.nrows() {
        let wi = w[i];
        if wi == S::zero() {
            continue;
        }
        let row = design.row(i);
        for a in 0..k {
            let wa = wi * row[a];
            xty[a] = xty[a] + wa * y[i];
            for b in a..k {
                xtx[a * k + b] = xtx[a * k + b] + wa * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtx[a * k + b] = xtx[b * k + a];
        }
    }
    let cond = condition_number(&xtx, k);
    if !(cond.as_f64() <= MAX_CONDITION) {
        return Err(AdrfError::RankDeficient { condition: cond.as_f64() });
    }
    solve(&xtx, &xty, k)
}
