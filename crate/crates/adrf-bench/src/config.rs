//! Structured run configuration. Every field has a default, so an empty file (or
//! no file) reproduces the stock presets; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use robust_adrf::adrf::{AdrfConfig, DesignTreatment, MethodParams, ScoreMode};
use robust_adrf::evt::{TailCoefficientForm, TailConfig};
use robust_adrf::extensions::{RxConfig, TsConfig};
use robust_adrf::nuisance::{GbtLoss, GbtParams, LearnerKind};
use robust_adrf::smoothers::{GncConfig, ScaleSource, DEFAULT_SCHEDULE};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub run: RunSection,
    pub nuisance: NuisanceSection,
    pub gnc: GncSection,
    pub adrf: AdrfSection,
    pub methods: MethodsSection,
    pub evt: EvtSection,
    pub coverage: CoverageSection,
    pub ts: TsSection,
    pub rx: RxSection,
    pub walltime: WalltimeSection,
}

/// Overrides of a preset's grid. `None` keeps the preset default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Option<usize>,
    pub n: Option<usize>,
    pub dgps: Option<Vec<String>>,
    pub p: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceSection {
    /// One of `gbt`, `gbt_absolute`, `ridge`, `lasso`.
    pub learner: String,
    pub folds: usize,
    pub ridge_lambda: f64,
    pub lasso_lambda: f64,
    pub trees: usize,
    pub depth: usize,
    pub rate: f64,
    pub min_leaf: usize,
}

impl Default for NuisanceSection {
    fn default() -> Self {
        let g = GbtParams::default();
        Self {
            learner: "gbt".into(),
            folds: 3,
            ridge_lambda: 1.0,
            lasso_lambda: 0.1,
            trees: g.trees,
            depth: g.depth,
            rate: g.rate,
            min_leaf: g.min_leaf,
        }
    }
}

impl NuisanceSection {
    pub fn learner_named(&self, name: &str) -> Result<LearnerKind> {
        let gbt = |loss| GbtParams { loss, trees: self.trees, depth: self.depth, rate: self.rate, min_leaf: self.min_leaf };
        let l = match name {
            "gbt" => LearnerKind::Gbt(gbt(GbtLoss::Squared)),
            "gbt_absolute" => LearnerKind::Gbt(gbt(GbtLoss::Absolute)),
            "ridge" => LearnerKind::Ridge { lambda: self.ridge_lambda },
            "lasso" => LearnerKind::Lasso { lambda: self.lasso_lambda },
            other => return Err(BenchError::Config(format!("unknown learner '{other}'"))),
        };
        l.validate()?;
        Ok(l)
    }

    pub fn learner(&self) -> Result<LearnerKind> {
        self.learner_named(&self.learner)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GncSection {
    pub gamma: f64,
    pub schedule: Vec<f64>,
    pub irls_tol: f64,
    pub irls_max_iter: usize,
    pub cutoff_mult: f64,
    pub mad_consistency: bool,
}

impl Default for GncSection {
    fn default() -> Self {
        let g = GncConfig::default();
        Self {
            gamma: g.gamma,
            schedule: DEFAULT_SCHEDULE.to_vec(),
            irls_tol: g.irls_tol,
            irls_max_iter: g.irls_max_iter,
            cutoff_mult: g.cutoff_mult,
            mad_consistency: g.mad_consistency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdrfSection {
    pub h_scale: f64,
    pub grid_size: usize,
    pub min_window: usize,
    /// `raw` or `residualized`.
    pub design: String,
    /// `all_grid_points` or `visited_only`.
    pub score_mode: String,
}

impl Default for AdrfSection {
    fn default() -> Self {
        Self { h_scale: 1.0, grid_size: 40, min_window: 8, design: "raw".into(), score_mode: "all_grid_points".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodsSection {
    pub huber_eps: f64,
    pub quantile_tau: f64,
    pub winsor_mult: f64,
}

impl Default for MethodsSection {
    fn default() -> Self {
        let m = MethodParams::default();
        Self { huber_eps: m.huber_eps, quantile_tau: m.quantile_tau, winsor_mult: m.winsor_mult }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvtSection {
    /// Method whose residuals feed the tail suite: `gnc_fixed` or `shift`.
    pub residual_source: String,
    pub threshold_quantile: f64,
    pub hill_k_frac: f64,
    pub gev_blocks: usize,
    pub threshold_points: usize,
    pub return_probs: Vec<f64>,
    pub bootstrap: usize,
    pub ctc_k_frac: f64,
    /// `expectation` or `joint_exceedance`.
    pub ctc_form: String,
}

impl Default for EvtSection {
    fn default() -> Self {
        let t = TailConfig::default();
        Self {
            residual_source: "gnc_fixed".into(),
            threshold_quantile: t.threshold_quantile,
            hill_k_frac: t.hill_k_frac,
            gev_blocks: t.gev_blocks,
            threshold_points: t.threshold_points,
            return_probs: t.return_probs,
            bootstrap: t.bootstrap,
            ctc_k_frac: t.ctc_k_frac,
            ctc_form: "expectation".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageSection {
    pub bootstrap: usize,
    pub level: f64,
}

impl Default for CoverageSection {
    fn default() -> Self {
        Self { bootstrap: 50, level: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsSection {
    pub folds: usize,
    pub buffer: usize,
    pub window: usize,
    pub rho: f64,
}

impl Default for TsSection {
    fn default() -> Self {
        let t = TsConfig::default();
        Self { folds: t.folds, buffer: t.buffer, window: t.window, rho: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RxSection {
    pub folds: usize,
    pub huber_eps: f64,
    pub quadratic_features: bool,
    pub logistic_l2: f64,
}

impl Default for RxSection {
    fn default() -> Self {
        let r = RxConfig::default();
        Self { folds: r.folds, huber_eps: r.huber_eps, quadratic_features: r.quadratic_features, logistic_l2: r.logistic_l2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalltimeSection {
    pub repetitions: usize,
}

impl Default for WalltimeSection {
    fn default() -> Self {
        Self { repetitions: 5 }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks every section by building the library configurations.
    pub fn validate(&self) -> Result<()> {
        self.nuisance.learner()?;
        self.adrf_config()?.gnc.validate()?;
        self.tail_config()?;
        if self.nuisance.folds < 2 {
            return Err(BenchError::Config("nuisance.folds must be at least 2".into()));
        }
        if self.coverage.bootstrap < 2 || !(self.coverage.level > 0.0 && self.coverage.level < 1.0) {
            return Err(BenchError::Config("coverage needs bootstrap >= 2 and level in (0, 1)".into()));
        }
        if self.walltime.repetitions == 0 {
            return Err(BenchError::Config("walltime.repetitions must be positive".into()));
        }
        if self.run.seeds == Some(0) {
            return Err(BenchError::Config("run.seeds must be positive".into()));
        }
        Ok(())
    }

    pub fn gnc_config(&self) -> GncConfig {
        GncConfig {
            gamma: self.gnc.gamma,
            schedule: self.gnc.schedule.clone(),
            irls_tol: self.gnc.irls_tol,
            irls_max_iter: self.gnc.irls_max_iter,
            cutoff_mult: self.gnc.cutoff_mult,
            scale_source: ScaleSource::PostGncMad,
            mad_consistency: self.gnc.mad_consistency,
        }
    }

    pub fn adrf_config(&self) -> Result<AdrfConfig> {
        let design = match self.adrf.design.as_str() {
            "raw" => DesignTreatment::Raw,
            "residualized" => DesignTreatment::Residualized,
            other => return Err(BenchError::Config(format!("unknown design '{other}'"))),
        };
        let score_mode = match self.adrf.score_mode.as_str() {
            "all_grid_points" => ScoreMode::AllGridPoints,
            "visited_only" => ScoreMode::VisitedOnly,
            other => return Err(BenchError::Config(format!("unknown score mode '{other}'"))),
        };
        Ok(AdrfConfig {
            gnc: self.gnc_config(),
            params: MethodParams {
                huber_eps: self.methods.huber_eps,
                quantile_tau: self.methods.quantile_tau,
                winsor_mult: self.methods.winsor_mult,
            },
            h_scale: self.adrf.h_scale,
            grid_size: self.adrf.grid_size,
            min_window: self.adrf.min_window,
            design,
            score_mode,
            ..AdrfConfig::default()
        })
    }

    pub fn tail_config(&self) -> Result<TailConfig> {
        let ctc_form = match self.evt.ctc_form.as_str() {
            "expectation" => TailCoefficientForm::Expectation,
            "joint_exceedance" => TailCoefficientForm::JointExceedance,
            other => return Err(BenchError::Config(format!("unknown tail coefficient form '{other}'"))),
        };
        if !matches!(self.evt.residual_source.as_str(), "gnc_fixed" | "shift") {
            return Err(BenchError::Config(format!("unknown residual source '{}'", self.evt.residual_source)));
        }
        Ok(TailConfig {
            threshold_quantile: self.evt.threshold_quantile,
            hill_k_frac: self.evt.hill_k_frac,
            gev_blocks: self.evt.gev_blocks,
            threshold_points: self.evt.threshold_points,
            return_probs: self.evt.return_probs.clone(),
            bootstrap: self.evt.bootstrap,
            ctc_k_frac: self.evt.ctc_k_frac,
            ctc_form,
            seed: 0,
        })
    }

    pub fn rx_config(&self) -> RxConfig {
        RxConfig {
            folds: self.rx.folds,
            outcome_model: GbtParams {
                loss: GbtLoss::Squared,
                trees: self.nuisance.trees,
                depth: self.nuisance.depth,
                rate: self.nuisance.rate,
                min_leaf: self.nuisance.min_leaf,
            },
            huber_eps: self.rx.huber_eps,
            quadratic_features: self.rx.quadratic_features,
            logistic_l2: self.rx.logistic_l2,
            fixed_propensity: None,
        }
    }

    pub fn ts_config(&self) -> Result<TsConfig> {
        Ok(TsConfig { folds: self.ts.folds, buffer: self.ts.buffer, window: self.ts.window, learner: self.nuisance.learner()? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(BenchConfig::from_toml("").unwrap(), BenchConfig::default());
    }

    #[test]
    fn sections_override_and_unknown_keys_fail() {
        let c = BenchConfig::from_toml("[gnc]\ngamma = 0.5\n[run]\nseeds = 2\n").unwrap();
        assert_eq!(c.gnc.gamma, 0.5);
        assert_eq!(c.run.seeds, Some(2));
        assert!(BenchConfig::from_toml("[gnc]\ngama = 0.5\n").is_err());
        assert!(BenchConfig::from_toml("[nuisance]\nlearner = \"forest\"\n").is_err());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = toml::to_string(&BenchConfig::default()).unwrap();
        assert_eq!(BenchConfig::from_toml(&text).unwrap(), BenchConfig::default());
    }
}
