//! Descriptive statistics used across modules.

use crate::error::{degenerate, invalid, Result};
use crate::scalar::{total_cmp, Scalar};

pub fn mean<S: Scalar>(v: &[S]) -> S {
    if v.is_empty() {
        return S::nan();
    }
    v.iter().copied().sum::<S>() / S::from_count(v.len())
}

/// Sample variance with `n - 1` in the denominator.
pub fn variance<S: Scalar>(v: &[S]) -> S {
    if v.len() < 2 {
        return S::nan();
    }
    let m = mean(v);
    v.iter().map(|&x| (x - m) * (x - m)).sum::<S>() / S::from_count(v.len() - 1)
}

/// Sample standard deviation (`n - 1` denominator).
pub fn std_dev<S: Scalar>(v: &[S]) -> S {
    variance(v).sqrt()
}

pub fn sorted<S: Scalar>(v: &[S]) -> Vec<S> {
    let mut s = v.to_vec();
    s.sort_by(total_cmp);
    s
}

pub fn median<S: Scalar>(v: &[S]) -> Result<S> {
    if v.is_empty() {
        return Err(invalid("median of empty vector"));
    }
    let mut s = v.to_vec();
    let n = s.len();
    let mid = n / 2;
    let (_, upper, _) = s.select_nth_unstable_by(mid, total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        Ok(upper)
    } else {
        let lower = s[..mid].iter().copied().fold(S::neg_infinity(), S::max);
        Ok((lower + upper) / S::lit(2.0))
    }
}

/// Raw median absolute deviation about the median (no consistency factor).
pub fn mad<S: Scalar>(v: &[S]) -> Result<S> {
    let m = median(v)?;
    let dev: Vec<S> = v.iter().map(|&x| (x - m).abs()).collect();
    median(&dev)
}

/// Empirical quantile with linear interpolation between order statistics
/// (position `q (n - 1)` in the sorted sample).
pub fn quantile_sorted<S: Scalar>(sorted: &[S], q: f64) -> Result<S> {
    if sorted.is_empty() {
        return Err(invalid("quantile of empty vector"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid(format!("quantile level {q} outside [0, 1]")));
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = S::lit(pos - lo as f64);
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn quantile<S: Scalar>(v: &[S], q: f64) -> Result<S> {
    quantile_sorted(&sorted(v), q)
}

/// Evenly spaced values from `a` to `b` inclusive.
pub fn linspace<S: Scalar>(a: S, b: S, n: usize) -> Vec<S> {
    if n == 1 {
        return vec![a];
    }
    let step = (b - a) / S::from_count(n - 1);
    (0..n)
        .map(|i| if i + 1 == n { b } else { a + step * S::from_count(i) })
        .collect()
}

pub fn check_finite<S: Scalar>(v: &[S], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(crate::error::AdrfError::NonFinite(what.to_string()))
    }
}

/// Pearson correlation.
pub fn correlation<S: Scalar>(a: &[S], b: &[S]) -> Result<S> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid("correlation needs two equal-length vectors of length >= 2"));
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = S::zero();
    let mut saa = S::zero();
    let mut sbb = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        sab = sab + (x - ma) * (y - mb);
        saa = saa + (x - ma) * (x - ma);
        sbb = sbb + (y - mb) * (y - mb);
    }
    if saa == S::zero() || sbb == S::zero() {
        return Err(degenerate("correlation of a constant vector"));
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_mad_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
        assert_eq!(mad(&[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(mad(&[5.0; 6]).unwrap(), 0.0);
        assert_eq!(mad(&[0.0, 0.0, 0.0, 100.0]).unwrap(), 0.0);
        assert!(mad::<f64>(&[]).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let v: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.05).unwrap(), 0.5);
        assert_eq!(quantile(&v, 1.0).unwrap(), 10.0);
    }

    #[test]
    fn sample_std() {
        assert!((std_dev(&[0.2f64, 0.4]) - 0.141_421_356).abs() < 1e-8);
    }
}
