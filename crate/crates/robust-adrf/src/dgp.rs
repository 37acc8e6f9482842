//! Synthetic data-generating processes with known dose-response curves and
//! ground-truth contamination masks.
//!
//! All draws come from purpose-labelled child streams of the caller's seed, so each
//! component (covariates, treatment, noise, outlier indices, jumps) is reproducible
//! on its own.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Bernoulli, Distribution, Normal, StudentT, Uniform};

use crate::error::{invalid, AdrfError, Result};
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::Scalar;
use crate::stats;

/// Noise standard deviation of every outcome equation.
pub const NOISE_SD: f64 = 0.5;
/// Covariate count for the main kinds.
pub const DEFAULT_COVARIATES: usize = 5;
/// Sample size of the IHDP-like benchmark.
pub const IHDP_N: usize = 747;

const JUMP_MEAN: f64 = 12.0;
const JUMP_SD: f64 = 3.0;
const T_JUMP_SCALE: f64 = 6.0;
const IHDP_JUMP_MEAN: f64 = 8.0;
const IHDP_JUMP_SD: f64 = 2.0;
const IHDP_CONTINUOUS: usize = 6;
const IHDP_BINARY: usize = 19;
const TS_COVARIATES: usize = 5;
const TS_JUMP_SDS: f64 = 10.0;
const TS_TREND_AMPLITUDE: f64 = 0.6;
const TS_TREND_PERIOD: f64 = 250.0;
const BINARY_COVARIATES: usize = 10;

/// Data-generating process family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DgpKind {
    Parabola,
    Sinusoidal,
    SinusoidalRegion,
    SinusoidalAsymmetric,
    SinusoidalHeavytail,
    TFamily { nu: u32 },
    IhdpLike,
}

/// Distribution of the additive jump applied to contaminated outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContaminationLaw {
    /// Random sign times |N(12, 3^2)|.
    GaussianJump,
    /// +|N(12, 3^2)|.
    PositiveJump,
    /// 6 times a Student-t draw with `nu` degrees of freedom.
    ScaledStudentT { nu: u32 },
    /// Gaussian jump restricted to samples with treatment in [0, 1].
    RegionJump,
    /// Random sign times |N(8, 2^2)|.
    SymmetricModerate,
}

impl DgpKind {
    /// The five kinds of the main sweep, in table order.
    pub const MAIN: [DgpKind; 5] = [
        DgpKind::Parabola,
        DgpKind::Sinusoidal,
        DgpKind::SinusoidalRegion,
        DgpKind::SinusoidalAsymmetric,
        DgpKind::SinusoidalHeavytail,
    ];

    pub fn contamination(self) -> ContaminationLaw {
        match self {
            DgpKind::Parabola | DgpKind::Sinusoidal => ContaminationLaw::GaussianJump,
            DgpKind::SinusoidalRegion => ContaminationLaw::RegionJump,
            DgpKind::SinusoidalAsymmetric => ContaminationLaw::PositiveJump,
            DgpKind::SinusoidalHeavytail => ContaminationLaw::ScaledStudentT { nu: 3 },
            DgpKind::TFamily { nu } => ContaminationLaw::ScaledStudentT { nu },
            DgpKind::IhdpLike => ContaminationLaw::SymmetricModerate,
        }
    }

    /// True when the contamination law is a Gaussian jump (uniform or regional).
    pub fn is_gaussian_jump(self) -> bool {
        matches!(
            self.contamination(),
            ContaminationLaw::GaussianJump | ContaminationLaw::PositiveJump | ContaminationLaw::RegionJump
        )
    }

    pub fn name(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for DgpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DgpKind::Parabola => f.write_str("parabola"),
            DgpKind::Sinusoidal => f.write_str("sinusoidal"),
            DgpKind::SinusoidalRegion => f.write_str("sinusoidal_region"),
            DgpKind::SinusoidalAsymmetric => f.write_str("sinusoidal_asymmetric"),
            DgpKind::SinusoidalHeavytail => f.write_str("sinusoidal_heavytail"),
            DgpKind::TFamily { nu } => write!(f, "t_family_{nu}"),
            DgpKind::IhdpLike => f.write_str("ihdp_like"),
        }
    }
}

impl FromStr for DgpKind {
    type Err = AdrfError;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "parabola" => DgpKind::Parabola,
            "sinusoidal" => DgpKind::Sinusoidal,
            "sinusoidal_region" | "region" => DgpKind::SinusoidalRegion,
            "sinusoidal_asymmetric" | "asymmetric" => DgpKind::SinusoidalAsymmetric,
            "sinusoidal_heavytail" | "heavytail" => DgpKind::SinusoidalHeavytail,
            "ihdp_like" | "ihdp" => DgpKind::IhdpLike,
            other => {
                let nu = other
                    .strip_prefix("t_family_")
                    .or_else(|| other.strip_prefix("t_family:"))
                    .and_then(|v| v.parse::<u32>().ok())
                    .ok_or_else(|| invalid(format!("unknown DGP kind '{other}'")))?;
                if nu < 2 {
                    return Err(invalid("t_family needs nu >= 2"));
                }
                DgpKind::TFamily { nu }
            }
        };
        Ok(kind)
    }
}

/// True dose-response curve of a kind.
pub fn true_theta<S: Scalar>(kind: DgpKind, t: S) -> S {
    let x = t.as_f64();
    let v = match kind {
        DgpKind::Parabola => 0.5 * x * x,
        DgpKind::IhdpLike => 2.0 * (0.8 * x).tanh() + 0.3 * (1.5 * x).sin(),
        _ => sinusoid(x),
    };
    S::lit(v)
}

fn sinusoid(x: f64) -> f64 {
    (PI * x / 2.0).sin() + 0.5 * x
}

/// Confounding function `g(X)` added to the outcome.
pub fn confounder<S: Scalar>(kind: DgpKind, row: &[S]) -> S {
    let x = |j: usize| row[j].as_f64();
    let v = match kind {
        DgpKind::IhdpLike => {
            let b = |j: usize| row[IHDP_CONTINUOUS + j].as_f64();
            0.6 * x(0) + 0.4 * (x(1) * x(1) - 1.0) - 0.3 * x(2) * x(3) + 0.5 * b(0) - 0.4 * b(1)
                + 0.6 * b(2) * x(4)
                + 0.3 * b(3) * b(4)
        }
        _ => x(0) + 0.5 * x(1) * x(1) - 0.3 * x(2),
    };
    S::lit(v)
}

/// Cross-sectional dataset with a scalar continuous treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    pub x: Matrix<S>,
    pub t: Vec<S>,
    pub y: Vec<S>,
    pub outlier_mask: Vec<bool>,
    /// Additive contamination applied to each outcome (zero when clean).
    pub jumps: Vec<S>,
    pub kind: DgpKind,
    pub p_contam: f64,
    pub seed: u64,
}

impl<S: Scalar> Dataset<S> {
    pub fn n(&self) -> usize {
        self.t.len()
    }

    /// Dataset restricted to (possibly repeated) rows.
    pub fn resample(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            outlier_mask: idx.iter().map(|&i| self.outlier_mask[i]).collect(),
            jumps: idx.iter().map(|&i| self.jumps[i]).collect(),
            kind: self.kind,
            p_contam: self.p_contam,
            seed: self.seed,
        }
    }
}

/// Generation options beyond the kind-level defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    /// Covariate count for the main kinds (at least 3; only the first three matter).
    pub covariates: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self { covariates: DEFAULT_COVARIATES }
    }
}

fn contamination_count(n: usize, p: f64) -> usize {
    (p * n as f64 + 1e-9).floor() as usize
}

fn check_fraction(p: f64) -> Result<()> {
    if (0.0..=0.5).contains(&p) {
        Ok(())
    } else {
        Err(invalid(format!("contamination fraction {p} outside [0, 0.5]")))
    }
}

fn normal_matrix(n: usize, p: usize, seed: u64, purpose: &str) -> Vec<f64> {
    let mut r = rng::stream(seed, purpose, 0);
    (0..n * p).map(|_| r.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

fn noise(n: usize, sd: f64, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, "noise", 0);
    let d = Normal::new(0.0, sd).expect("valid sd");
    (0..n).map(|_| d.sample(&mut r)).collect()
}

fn random_sign(r: &mut rng::Rng) -> f64 {
    if r.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

fn draw_jump(law: ContaminationLaw, r: &mut rng::Rng) -> f64 {
    let gauss = Normal::new(JUMP_MEAN, JUMP_SD).expect("valid");
    match law {
        ContaminationLaw::GaussianJump | ContaminationLaw::RegionJump => {
            random_sign(r) * gauss.sample(r).abs()
        }
        ContaminationLaw::PositiveJump => {
            // |N(12, 9)| is zero with probability zero; redraw guards the invariant.
            loop {
                let v = gauss.sample(r).abs();
                if v > 0.0 {
                    break v;
                }
            }
        }
        ContaminationLaw::ScaledStudentT { nu } => {
            T_JUMP_SCALE * StudentT::new(f64::from(nu)).expect("nu >= 2").sample(r)
        }
        ContaminationLaw::SymmetricModerate => {
            random_sign(r) * Normal::new(IHDP_JUMP_MEAN, IHDP_JUMP_SD).expect("valid").sample(r).abs()
        }
    }
}

/// Draws a dataset of `kind` with the default covariate count.
pub fn generate<S: Scalar>(kind: DgpKind, n: usize, p_contam: f64, seed: u64) -> Result<Dataset<S>> {
    generate_with(kind, n, p_contam, seed, &GenerateOptions::default())
}

/// Draws a dataset of `kind`.
///
/// Exactly `floor(p_contam * n)` indices receive an additive jump; they are drawn
/// without replacement from the eligible support (treatment in [0, 1] for the region
/// kind, every index otherwise).
pub fn generate_with<S: Scalar>(
    kind: DgpKind,
    n: usize,
    p_contam: f64,
    seed: u64,
    opts: &GenerateOptions,
) -> Result<Dataset<S>> {
    if n < 20 {
        return Err(invalid(format!("n = {n} below the minimum of 20")));
    }
    check_fraction(p_contam)?;
    if let DgpKind::TFamily { nu } = kind {
        if nu < 2 {
            return Err(invalid("t_family needs nu >= 2"));
        }
    }
    let (cols, xs) = match kind {
        DgpKind::IhdpLike => {
            let cont = normal_matrix(n, IHDP_CONTINUOUS, seed, "covariates");
            let mut r = rng::stream(seed, "binary_covariates", 0);
            let bern = Bernoulli::new(0.3).expect("valid");
            let width = IHDP_CONTINUOUS + IHDP_BINARY;
            let mut xs = Vec::with_capacity(n * width);
            for i in 0..n {
                xs.extend_from_slice(&cont[i * IHDP_CONTINUOUS..(i + 1) * IHDP_CONTINUOUS]);
                xs.extend((0..IHDP_BINARY).map(|_| if bern.sample(&mut r) { 1.0 } else { 0.0 }));
            }
            (width, xs)
        }
        _ => {
            if opts.covariates < 3 {
                return Err(invalid("at least three covariates are required"));
            }
            (opts.covariates, normal_matrix(n, opts.covariates, seed, "covariates"))
        }
    };
    let mut tr = rng::stream(seed, "treatment", 0);
    let unif = Uniform::new_inclusive(-2.0, 2.0).expect("valid");
    let t: Vec<f64> = (0..n).map(|_| unif.sample(&mut tr)).collect();
    let eps = noise(n, NOISE_SD, seed);

    let x = Matrix::new(n, cols, xs.into_iter().map(S::lit).collect())?;
    let mut y: Vec<f64> = (0..n)
        .map(|i| true_theta::<f64>(kind, t[i]) + confounder(kind, x.row(i)).as_f64() + eps[i])
        .collect();

    let law = kind.contamination();
    let k = contamination_count(n, p_contam);
    let eligible: Vec<usize> = match law {
        ContaminationLaw::RegionJump => (0..n).filter(|&i| (0.0..=1.0).contains(&t[i])).collect(),
        _ => (0..n).collect(),
    };
    if eligible.len() < k {
        return Err(AdrfError::InsufficientSupport(format!(
            "{kind}: {} eligible samples with treatment in [0, 1], {k} required",
            eligible.len()
        )));
    }
    let mut outlier_mask = vec![false; n];
    let mut jumps = vec![0.0; n];
    if k > 0 {
        let mut ir = rng::stream(seed, "outlier_index", 0);
        let mut chosen: Vec<usize> =
            index::sample(&mut ir, eligible.len(), k).into_iter().map(|j| eligible[j]).collect();
        chosen.sort_unstable();
        let mut jr = rng::stream(seed, "jump", 0);
        for i in chosen {
            let j = draw_jump(law, &mut jr);
            outlier_mask[i] = true;
            jumps[i] = j;
            y[i] += j;
        }
    }
    Ok(Dataset {
        x,
        t: t.into_iter().map(S::lit).collect(),
        y: y.into_iter().map(S::lit).collect(),
        outlier_mask,
        jumps: jumps.into_iter().map(S::lit).collect(),
        kind,
        p_contam,
        seed,
    })
}

/// Dataset with a vector-valued treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiDataset<S> {
    pub x: Matrix<S>,
    pub t: Matrix<S>,
    pub y: Vec<S>,
    pub outlier_mask: Vec<bool>,
}

impl<S: Scalar> MultiDataset<S> {
    pub fn dim(&self) -> usize {
        self.t.ncols()
    }
}

/// Dose-response surface for a two- or three-dimensional treatment.
pub fn true_theta_multi<S: Scalar>(t: &[S]) -> S {
    let t1 = t[0].as_f64();
    let t2 = t[1].as_f64();
    let mut v = (PI * t1 / 2.0).sin() + 0.5 * t2 + 0.3 * t1 * t2;
    if let Some(t3) = t.get(2) {
        let t3 = t3.as_f64();
        v += 0.2 * t3 * t3;
    }
    S::lit(v)
}

/// Draws a multi-treatment dataset (`d` in {2, 3}) with Gaussian-jump contamination.
pub fn generate_multi<S: Scalar>(d: usize, n: usize, p_contam: f64, seed: u64) -> Result<MultiDataset<S>> {
    if !(2..=3).contains(&d) {
        return Err(invalid(format!("treatment dimension {d} outside {{2, 3}}")));
    }
    if n < 20 {
        return Err(invalid(format!("n = {n} below the minimum of 20")));
    }
    check_fraction(p_contam)?;
    let xs = normal_matrix(n, DEFAULT_COVARIATES, seed, "covariates");
    let x = Matrix::new(n, DEFAULT_COVARIATES, xs.into_iter().map(S::lit).collect())?;
    let mut tr = rng::stream(seed, "treatment", 0);
    let unif = Uniform::new_inclusive(-2.0, 2.0).expect("valid");
    let ts: Vec<S> = (0..n * d).map(|_| S::lit(unif.sample(&mut tr))).collect();
    let t = Matrix::new(n, d, ts)?;
    let eps = noise(n, NOISE_SD, seed);
    let mut y: Vec<f64> = (0..n)
        .map(|i| {
            true_theta_multi(t.row(i)).as_f64()
                + confounder(DgpKind::Sinusoidal, x.row(i)).as_f64()
                + eps[i]
        })
        .collect();
    let k = contamination_count(n, p_contam);
    let mut outlier_mask = vec![false; n];
    if k > 0 {
        let mut ir = rng::stream(seed, "outlier_index", 0);
        let mut chosen = index::sample(&mut ir, n, k).into_vec();
        chosen.sort_unstable();
        let mut jr = rng::stream(seed, "jump", 0);
        for i in chosen {
            outlier_mask[i] = true;
            y[i] += draw_jump(ContaminationLaw::GaussianJump, &mut jr);
        }
    }
    Ok(MultiDataset { x, t, y: y.into_iter().map(S::lit).collect(), outlier_mask })
}

/// Time-indexed dataset: sample `i` is observed at time `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset<S> {
    pub x: Matrix<S>,
    pub t: Vec<S>,
    pub y: Vec<S>,
    pub outlier_mask: Vec<bool>,
    pub rho: f64,
    pub trend: Vec<S>,
}

/// Draws a time series with AR(1) covariates, a periodic trend and one contiguous
/// contaminated block whose jumps are ten clean-outcome standard deviations.
pub fn generate_ts<S: Scalar>(n: usize, rho: f64, p_contam: f64, seed: u64) -> Result<TimeSeriesDataset<S>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid(format!("rho = {rho} outside [0, 1)")));
    }
    if n < 20 {
        return Err(invalid(format!("n = {n} below the minimum of 20")));
    }
    check_fraction(p_contam)?;
    let innov = normal_matrix(n, TS_COVARIATES, seed, "covariates");
    let scale = (1.0 - rho * rho).sqrt();
    let mut xs = vec![0.0; n * TS_COVARIATES];
    for j in 0..TS_COVARIATES {
        xs[j] = innov[j];
        for i in 1..n {
            xs[i * TS_COVARIATES + j] = rho * xs[(i - 1) * TS_COVARIATES + j] + scale * innov[i * TS_COVARIATES + j];
        }
    }
    let mut tr = rng::stream(seed, "treatment", 0);
    let t: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = tr.sample(rand_distr::StandardNormal);
            0.3 * xs[i * TS_COVARIATES] + 0.3 * xs[i * TS_COVARIATES + 1] + e
        })
        .collect();
    let trend: Vec<f64> = (0..n)
        .map(|i| TS_TREND_AMPLITUDE * (2.0 * PI * i as f64 / TS_TREND_PERIOD).sin())
        .collect();
    let eps = noise(n, NOISE_SD, seed);
    let mut y: Vec<f64> = (0..n)
        .map(|i| {
            sinusoid(t[i]) + xs[i * TS_COVARIATES] + 0.3 * xs[i * TS_COVARIATES + 1] + trend[i] + eps[i]
        })
        .collect();
    let clean_sd = stats::std_dev(&y);
    let k = contamination_count(n, p_contam);
    let mut outlier_mask = vec![false; n];
    if k > 0 {
        let mut r = rng::stream(seed, "outlier_block", 0);
        let start = r.random_range(0..=n - k);
        for i in start..start + k {
            outlier_mask[i] = true;
            y[i] += random_sign(&mut r) * TS_JUMP_SDS * clean_sd;
        }
    }
    Ok(TimeSeriesDataset {
        x: Matrix::new(n, TS_COVARIATES, xs.into_iter().map(S::lit).collect())?,
        t: t.into_iter().map(S::lit).collect(),
        y: y.into_iter().map(S::lit).collect(),
        outlier_mask,
        rho,
        trend: trend.into_iter().map(S::lit).collect(),
    })
}

/// Binary-treatment dataset with heterogeneous effects.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDataset<S> {
    pub x: Matrix<S>,
    pub treat: Vec<bool>,
    pub y: Vec<S>,
    pub true_tau: Vec<S>,
    pub propensity: Vec<S>,
    pub outlier_mask: Vec<bool>,
}

/// Treatment effect `1 + 0.5 x1 - 0.3 x2^2`.
pub fn binary_tau<S: Scalar>(row: &[S]) -> S {
    S::lit(1.0) + S::lit(0.5) * row[0] - S::lit(0.3) * row[1] * row[1]
}

/// Baseline outcome of the binary design.
pub fn binary_baseline<S: Scalar>(row: &[S]) -> S {
    row[0] + S::lit(0.5) * row[1] * row[1] - S::lit(0.3) * row[2]
}

/// Draws the binary-treatment design; contaminated outcomes gain `N(8, 2^2)`.
pub fn generate_binary<S: Scalar>(n: usize, p_contam: f64, seed: u64) -> Result<BinaryDataset<S>> {
    if n < 50 {
        return Err(invalid(format!("n = {n} below the minimum of 50")));
    }
    check_fraction(p_contam)?;
    let xs = normal_matrix(n, BINARY_COVARIATES, seed, "covariates");
    let x = Matrix::new(n, BINARY_COVARIATES, xs.into_iter().map(S::lit).collect())?;
    let mut tr = rng::stream(seed, "treatment", 0);
    let eps = noise(n, NOISE_SD, seed);
    let mut treat = Vec::with_capacity(n);
    let mut propensity = Vec::with_capacity(n);
    let mut true_tau = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row(i);
        let e = 1.0 / (1.0 + (-0.3 * row[2].as_f64()).exp());
        let d = tr.random_bool(e);
        let tau = binary_tau(row);
        let mut yi = binary_baseline(row).as_f64() + eps[i];
        if d {
            yi += tau.as_f64();
        }
        treat.push(d);
        propensity.push(S::lit(e));
        true_tau.push(tau);
        y.push(yi);
    }
    let k = contamination_count(n, p_contam);
    let mut outlier_mask = vec![false; n];
    if k > 0 {
        let mut ir = rng::stream(seed, "outlier_index", 0);
        let mut chosen = index::sample(&mut ir, n, k).into_vec();
        chosen.sort_unstable();
        let mut jr = rng::stream(seed, "jump", 0);
        let d = Normal::new(IHDP_JUMP_MEAN, IHDP_JUMP_SD).expect("valid");
        for i in chosen {
            outlier_mask[i] = true;
            y[i] += d.sample(&mut jr);
        }
    }
    Ok(BinaryDataset { x, treat, y: y.into_iter().map(S::lit).collect(), true_tau, propensity, outlier_mask })
}
