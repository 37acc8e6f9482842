//! Robust double-machine-learning estimation of average dose-response functions
//! under outcome contamination.
//!
//! The pipeline is: draw or load data ([`dgp`]), cross-fit nuisance models and
//! residualize ([`nuisance`]), fit kernel-local second stages along a treatment grid
//! ([`smoothers`], [`adrf`]), then score the curve and the per-sample weights
//! ([`metrics`]) and diagnose the residual tail ([`evt`]).
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the `*64` aliases
//! below fix the usual double-precision instantiation.

pub mod adrf;
pub mod dgp;
pub mod error;
pub mod evt;
pub mod extensions;
pub mod linalg;
pub mod metrics;
pub mod nuisance;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod smoothers;
pub mod stats;

pub use adrf::{fit_adrf, AdrfConfig, MethodKind};
pub use error::{AdrfError, Result};
pub use scalar::Scalar;

pub type Dataset64 = dgp::Dataset<f64>;
pub type Residualized64 = nuisance::Residualized<f64>;
pub type AdrfEstimate64 = adrf::AdrfEstimate<f64>;
pub type LocalFit64 = smoothers::LocalFit<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type ShapeMetrics64 = metrics::ShapeMetrics<f64>;
pub type DetectionMetrics64 = metrics::DetectionMetrics<f64>;

pub type Dataset32 = dgp::Dataset<f32>;
pub type AdrfEstimate32 = adrf::AdrfEstimate<f32>;
