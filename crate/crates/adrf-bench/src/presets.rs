//! Experiment presets: each one expands to a grid of independent cells, runs them on
//! a bounded worker pool and gathers canonically sorted records.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use robust_adrf::adrf::{fit_adrf, fit_adrf_multid, make_grid, AdrfConfig, AdrfEstimate, MethodKind, SurfaceMethod};
use robust_adrf::dgp::{
    generate_binary, generate_multi, generate_ts, generate_with, true_theta, true_theta_multi, Dataset, DgpKind,
    GenerateOptions, IHDP_N,
};
use robust_adrf::evt::{
    hill_interval, mean_excess_shape, recommend, shape_interval, tail_report, GpdEstimator, TDependence,
    TailReport,
};
use robust_adrf::extensions::{rxlearner_fit, ts_fit};
use robust_adrf::metrics::{a5_failure_rate, detection_metrics, shape_metrics};
use robust_adrf::nuisance::{crossfit_residualize, crossfit_residualize_multi, LearnerKind, Residualized};
use robust_adrf::rng;
use robust_adrf::smoothers::silverman_bandwidth;
use robust_adrf::stats;

use crate::config::BenchConfig;
use crate::error::{BenchError, Result};
use crate::rows::{extra, finite, CurveRow, DecisionRow, ResultRow, RxRow, TailCurveRow, TailRow, TAIL_ESTIMATORS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    MainSweep,
    Ablation,
    SensitivityN,
    SensitivityGamma,
    SensitivityBandwidth,
    SensitivityPcov,
    TFamily,
    Walltime,
    CoveragePercentile,
    DetectionCurves,
    CutoffSweep,
    EvtSuite,
    DecisionRuleEval,
    NuisanceAblation,
    MultiTreatment,
    TsBenchmark,
    RxBenchmark,
    IhdpBenchmark,
    A5Table,
    ContractionDiag,
}

impl Preset {
    pub const ALL: [Preset; 20] = [
        Preset::MainSweep,
        Preset::Ablation,
        Preset::SensitivityN,
        Preset::SensitivityGamma,
        Preset::SensitivityBandwidth,
        Preset::SensitivityPcov,
        Preset::TFamily,
        Preset::Walltime,
        Preset::CoveragePercentile,
        Preset::DetectionCurves,
        Preset::CutoffSweep,
        Preset::EvtSuite,
        Preset::DecisionRuleEval,
        Preset::NuisanceAblation,
        Preset::MultiTreatment,
        Preset::TsBenchmark,
        Preset::RxBenchmark,
        Preset::IhdpBenchmark,
        Preset::A5Table,
        Preset::ContractionDiag,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Preset::MainSweep => "main_sweep",
            Preset::Ablation => "ablation",
            Preset::SensitivityN => "sensitivity_n",
            Preset::SensitivityGamma => "sensitivity_gamma",
            Preset::SensitivityBandwidth => "sensitivity_bandwidth",
            Preset::SensitivityPcov => "sensitivity_pcov",
            Preset::TFamily => "t_family",
            Preset::Walltime => "walltime",
            Preset::CoveragePercentile => "coverage_percentile",
            Preset::DetectionCurves => "detection_curves",
            Preset::CutoffSweep => "cutoff_sweep",
            Preset::EvtSuite => "evt_suite",
            Preset::DecisionRuleEval => "decision_rule_eval",
            Preset::NuisanceAblation => "nuisance_ablation",
            Preset::MultiTreatment => "multi_treatment",
            Preset::TsBenchmark => "ts_benchmark",
            Preset::RxBenchmark => "rx_benchmark",
            Preset::IhdpBenchmark => "ihdp_benchmark",
            Preset::A5Table => "a5_table",
            Preset::ContractionDiag => "contraction_diag",
        }
    }

    /// Subcommand spelling.
    pub fn command(self) -> String {
        self.id().replace('_', "-")
    }

    /// Whether output depends on the clock.
    pub fn is_timed(self) -> bool {
        self == Preset::Walltime
    }

    fn default_seeds(self) -> usize {
        match self {
            Preset::MainSweep | Preset::Ablation | Preset::A5Table => 10,
            Preset::NuisanceAblation | Preset::ContractionDiag | Preset::Walltime => 3,
            Preset::EvtSuite => 1,
            _ => 5,
        }
    }

    fn default_n(self) -> usize {
        match self {
            Preset::TsBenchmark => 1000,
            Preset::RxBenchmark => 2000,
            Preset::IhdpBenchmark => IHDP_N,
            _ => 800,
        }
    }

    fn default_dgps(self) -> Vec<DgpKind> {
        use DgpKind::*;
        match self {
            Preset::Ablation => vec![Parabola, SinusoidalRegion],
            Preset::SensitivityN | Preset::SensitivityGamma => vec![SinusoidalRegion, SinusoidalHeavytail],
            Preset::SensitivityBandwidth | Preset::SensitivityPcov => vec![SinusoidalRegion],
            Preset::TFamily => [2, 3, 5, 10].into_iter().map(|nu| TFamily { nu }).collect(),
            Preset::Walltime => vec![Sinusoidal],
            Preset::CoveragePercentile | Preset::NuisanceAblation => vec![Sinusoidal, SinusoidalRegion],
            Preset::CutoffSweep | Preset::ContractionDiag => vec![Sinusoidal, SinusoidalRegion, SinusoidalHeavytail],
            Preset::IhdpBenchmark => vec![IhdpLike],
            _ => DgpKind::MAIN.to_vec(),
        }
    }

    fn default_p(self) -> Vec<f64> {
        match self {
            Preset::MainSweep | Preset::A5Table => vec![0.0, 0.05, 0.15, 0.25],
            Preset::Ablation => vec![0.0, 0.15, 0.25],
            Preset::TFamily => vec![0.15],
            Preset::CoveragePercentile => vec![0.0, 0.25],
            Preset::DetectionCurves => vec![0.05, 0.15, 0.25],
            Preset::MultiTreatment => vec![0.0, 0.15, 0.25],
            Preset::TsBenchmark => vec![0.0, 0.10, 0.25],
            Preset::RxBenchmark => vec![0.0, 0.10, 0.20],
            Preset::IhdpBenchmark => vec![0.0, 0.15],
            _ => vec![0.25],
        }
    }

    fn methods(self) -> Vec<MethodKind> {
        use MethodKind::*;
        match self {
            Preset::MainSweep | Preset::Walltime | Preset::IhdpBenchmark => MethodKind::ALL.to_vec(),
            Preset::Ablation | Preset::SensitivityGamma => vec![GncFixed, Shift],
            Preset::SensitivityN => vec![StandardDml, HuberDml, QuantileDml, GncFixed, Shift],
            Preset::SensitivityBandwidth | Preset::SensitivityPcov | Preset::TFamily => {
                vec![StandardDml, HuberDml, QuantileDml, Shift]
            }
            Preset::CoveragePercentile => vec![StandardDml, Shift],
            Preset::DetectionCurves => vec![WinsorDml, GncFixed, Shift],
            Preset::NuisanceAblation => vec![StandardDml, HuberDml, Shift],
            Preset::TsBenchmark => vec![StandardDml, WinsorDml, GncFixed, Shift],
            _ => vec![Shift],
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Preset {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Preset::ALL
            .into_iter()
            .find(|p| p.id() == norm)
            .ok_or_else(|| BenchError::Usage(format!("unknown preset '{s}'")))
    }
}

/// Everything that shapes a run besides the preset.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub root_seed: u64,
    pub jobs: usize,
    pub quiet: bool,
    pub config: BenchConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { root_seed: 0, jobs: 1, quiet: true, config: BenchConfig::default() }
    }
}

/// Records produced by a preset, grouped by output table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PresetOutput {
    pub results: Vec<ResultRow>,
    pub curves: Vec<CurveRow>,
    pub tails: Vec<TailRow>,
    pub tail_curves: Vec<TailCurveRow>,
    pub decisions: Vec<DecisionRow>,
    pub rx: Vec<RxRow>,
    pub reports: Vec<serde_json::Value>,
}

impl PresetOutput {
    fn absorb(&mut self, o: PresetOutput) {
        self.results.extend(o.results);
        self.curves.extend(o.curves);
        self.tails.extend(o.tails);
        self.tail_curves.extend(o.tail_curves);
        self.decisions.extend(o.decisions);
        self.rx.extend(o.rx);
        self.reports.extend(o.reports);
    }

    /// Canonical order, independent of the order cells finished in.
    pub fn sort(&mut self) {
        self.results.sort_by(ResultRow::canonical_cmp);
        self.curves.sort_by(CurveRow::canonical_cmp);
        self.tails.sort_by(TailRow::canonical_cmp);
        self.tail_curves.sort_by(TailCurveRow::canonical_cmp);
        self.decisions.sort_by(|a, b| a.dgp.cmp(&b.dgp).then(a.p_contam.total_cmp(&b.p_contam)));
        self.rx.sort_by(RxRow::canonical_cmp);
        let key = |v: &serde_json::Value| v.get("key").and_then(|k| k.as_str()).unwrap_or_default().to_string();
        self.reports.sort_by_key(key);
    }
}

/// Resolved grid and shared settings of one run.
struct Plan {
    preset: Preset,
    cfg: BenchConfig,
    adrf: AdrfConfig,
    learner: LearnerKind,
    seeds: Vec<u64>,
    n: usize,
    dgps: Vec<DgpKind>,
    p: Vec<f64>,
}

impl Plan {
    fn new(preset: Preset, opts: &RunOptions) -> Result<Self> {
        let cfg = opts.config.clone();
        cfg.validate()?;
        let run = &cfg.run;
        let dgps = match &run.dgps {
            Some(names) => names.iter().map(|s| s.parse::<DgpKind>()).collect::<std::result::Result<Vec<_>, _>>()?,
            None => preset.default_dgps(),
        };
        let p = run.p.clone().unwrap_or_else(|| preset.default_p());
        if p.iter().any(|v| !(0.0..=0.5).contains(v)) {
            return Err(BenchError::Config("contamination fractions must lie in [0, 0.5]".into()));
        }
        let count = run.seeds.unwrap_or_else(|| preset.default_seeds()) as u64;
        Ok(Self {
            preset,
            adrf: cfg.adrf_config()?,
            learner: cfg.nuisance.learner()?,
            seeds: (0..count).map(|s| opts.root_seed.wrapping_add(s)).collect(),
            n: run.n.unwrap_or_else(|| preset.default_n()),
            dgps,
            p,
            cfg,
        })
    }

    /// Stream seed of a cell, shared by every method fitted on it.
    fn data_seed(&self, dgp: &str, p_index: usize, seed: u64) -> u64 {
        rng::derive(seed, &format!("{}/{}/{}", self.preset.id(), dgp, p_index), 0)
    }

    /// Per-method child stream of a cell.
    fn method_seed(&self, dgp: &str, p_index: usize, seed: u64, method: &str) -> u64 {
        rng::derive(self.data_seed(dgp, p_index, seed), method, 0)
    }

    fn cells<T>(&self, mut f: impl FnMut(&DgpKind, usize, f64, u64) -> T) -> Vec<T> {
        let mut out = Vec::new();
        for dgp in &self.dgps {
            for (pi, &p) in self.p.iter().enumerate() {
                for &s in &self.seeds {
                    out.push(f(dgp, pi, p, s));
                }
            }
        }
        out
    }
}

type Job<'a> = Box<dyn Fn() -> PresetOutput + Send + Sync + 'a>;

fn execute(preset: Preset, jobs: Vec<Job<'_>>, opts: &RunOptions) -> Result<PresetOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| BenchError::Config(format!("cannot start worker pool: {e}")))?;
    let total = jobs.len();
    let done = AtomicUsize::new(0);
    let parts: Vec<PresetOutput> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let out = job();
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                if !opts.quiet {
                    eprintln!("[{preset}] cell {k}/{total}");
                }
                out
            })
            .collect()
    });
    let mut all = PresetOutput::default();
    for part in parts {
        all.absorb(part);
    }
    all.sort();
    Ok(all)
}

fn job<'a>(f: impl Fn() -> PresetOutput + Send + Sync + 'a) -> Job<'a> {
    Box::new(f)
}

/// Runs every cell of `preset`.
pub fn run_preset(preset: Preset, opts: &RunOptions) -> Result<PresetOutput> {
    let plan = Plan::new(preset, opts)?;
    if preset == Preset::DecisionRuleEval {
        return decision_rule_eval(&plan, opts);
    }
    let variants = sweep_variants(preset, &plan.adrf);
    let single = vec![Variant { extra: String::new(), adrf: plan.adrf.clone() }];
    let (plan, variants, single) = (&plan, &variants, &single);
    let mut jobs: Vec<Job<'_>> = Vec::new();
    match preset {
        Preset::MainSweep | Preset::Ablation | Preset::TFamily | Preset::DetectionCurves | Preset::IhdpBenchmark => {
            let curves = preset == Preset::MainSweep;
            jobs = plan.cells(|&dgp, pi, p, s| {
                job(move || standard_cell(plan, &Cell::new(dgp, pi, p, s, plan.n), single, curves))
            });
        }
        Preset::SensitivityN => {
            let ns = match plan.cfg.run.n {
                Some(n) => vec![n],
                None => vec![200, 800, 2000, 5000],
            };
            for n in ns {
                jobs.extend(plan.cells(|&dgp, pi, p, s| {
                    job(move || {
                        let v = [Variant { extra: extra(&[("n", n.to_string())]), adrf: plan.adrf.clone() }];
                        standard_cell(plan, &Cell::new(dgp, pi, p, s, n), &v, false)
                    })
                }));
            }
        }
        Preset::SensitivityGamma | Preset::SensitivityBandwidth | Preset::CutoffSweep => {
            jobs = plan.cells(|&dgp, pi, p, s| {
                job(move || standard_cell(plan, &Cell::new(dgp, pi, p, s, plan.n), variants, false))
            });
        }
        Preset::SensitivityPcov => {
            for pc in [5usize, 20, 50] {
                jobs.extend(plan.cells(|&dgp, pi, p, s| {
                    job(move || {
                        let mut cell = Cell::new(dgp, pi, p, s, plan.n);
                        cell.gen = GenerateOptions { covariates: pc };
                        let v = [Variant { extra: extra(&[("p_cov", pc.to_string())]), adrf: plan.adrf.clone() }];
                        standard_cell(plan, &cell, &v, false)
                    })
                }));
            }
        }
        Preset::NuisanceAblation => {
            for name in ["gbt", "gbt_absolute", "ridge", "lasso"] {
                jobs.extend(plan.cells(|&dgp, pi, p, s| {
                    job(move || {
                        let mut cell = Cell::new(dgp, pi, p, s, plan.n);
                        let v = [Variant { extra: extra(&[("learner", name.to_string())]), adrf: plan.adrf.clone() }];
                        match plan.cfg.nuisance.learner_named(name) {
                            Ok(l) => {
                                cell.learner = Some(l);
                                standard_cell(plan, &cell, &v, false)
                            }
                            Err(e) => error_rows(plan, &cell, &v, &e.to_string()),
                        }
                    })
                }));
            }
        }
        Preset::Walltime => {
            jobs = plan.cells(|&dgp, pi, p, s| job(move || walltime_cell(plan, &Cell::new(dgp, pi, p, s, plan.n))));
        }
        Preset::CoveragePercentile => {
            jobs = plan.cells(|&dgp, pi, p, s| job(move || coverage_cell(plan, &Cell::new(dgp, pi, p, s, plan.n))));
        }
        Preset::EvtSuite => {
            jobs = plan.cells(|&dgp, pi, p, s| job(move || evt_cell(plan, &Cell::new(dgp, pi, p, s, plan.n)).0));
        }
        Preset::A5Table => {
            jobs = plan.cells(|&dgp, pi, p, s| job(move || a5_cell(plan, &Cell::new(dgp, pi, p, s, plan.n))));
        }
        Preset::ContractionDiag => {
            jobs = plan.cells(|&dgp, pi, p, s| job(move || contraction_cell(plan, &Cell::new(dgp, pi, p, s, plan.n))));
        }
        Preset::MultiTreatment | Preset::TsBenchmark | Preset::RxBenchmark => {
            let dims: &[usize] = if preset == Preset::MultiTreatment { &[2, 3] } else { &[0] };
            for &d in dims {
                for (pi, &p) in plan.p.iter().enumerate() {
                    for &s in &plan.seeds {
                        jobs.push(match preset {
                            Preset::MultiTreatment => job(move || multi_cell(plan, d, pi, p, s)),
                            Preset::TsBenchmark => job(move || ts_cell(plan, pi, p, s)),
                            _ => job(move || rx_cell(plan, pi, p, s)),
                        });
                    }
                }
            }
        }
        Preset::DecisionRuleEval => unreachable!("handled above"),
    }
    execute(preset, jobs, opts)
}

/// A settings variant fitted on the same residualized data.
struct Variant {
    extra: String,
    adrf: AdrfConfig,
}

fn sweep_variants(preset: Preset, base: &AdrfConfig) -> Vec<Variant> {
    let with = |key: &str, v: f64, f: &dyn Fn(&mut AdrfConfig)| {
        let mut a = base.clone();
        f(&mut a);
        Variant { extra: extra(&[(key, v.to_string())]), adrf: a }
    };
    match preset {
        Preset::SensitivityGamma => {
            [0.05, 0.1, 0.2, 0.5, 1.0].into_iter().map(|g| with("gamma", g, &|a| a.gnc.gamma = g)).collect()
        }
        Preset::SensitivityBandwidth => {
            [0.5, 0.75, 1.0, 1.25, 1.5, 2.0].into_iter().map(|h| with("h_scale", h, &|a| a.h_scale = h)).collect()
        }
        _ => [2.0, 2.5, 3.0, 3.5, 4.0, 5.0].into_iter().map(|c| with("cutoff", c, &|a| a.gnc.cutoff_mult = c)).collect(),
    }
}

/// One (kind, contamination, seed) draw.
#[derive(Debug, Clone)]
struct Cell {
    dgp: DgpKind,
    p_index: usize,
    p: f64,
    seed: u64,
    n: usize,
    gen: GenerateOptions,
    learner: Option<LearnerKind>,
}

impl Cell {
    fn new(dgp: DgpKind, p_index: usize, p: f64, seed: u64, n: usize) -> Self {
        Self { dgp, p_index, p, seed, n, gen: GenerateOptions::default(), learner: None }
    }

    fn name(&self) -> String {
        self.dgp.to_string()
    }

    fn data_seed(&self, plan: &Plan) -> u64 {
        plan.data_seed(&self.name(), self.p_index, self.seed)
    }

    fn prepare(&self, plan: &Plan) -> Result<(Dataset<f64>, Residualized<f64>)> {
        let seed = self.data_seed(plan);
        let ds = generate_with::<f64>(self.dgp, self.n, self.p, seed, &self.gen)?;
        let learner = self.learner.unwrap_or(plan.learner);
        let res = crossfit_residualize(&ds, &learner, plan.cfg.nuisance.folds, rng::derive(seed, "folds", 0))?;
        Ok((ds, res))
    }

    fn row(&self, plan: &Plan, method: &str, extra: &str) -> ResultRow {
        ResultRow::new(plan.preset.id(), method, &self.name(), self.p, self.seed, self.n, extra.to_string())
    }
}

fn error_rows(plan: &Plan, cell: &Cell, variants: &[Variant], msg: &str) -> PresetOutput {
    let mut out = PresetOutput::default();
    for v in variants {
        for m in plan.preset.methods() {
            out.results.push(cell.row(plan, m.name(), &v.extra).failed(msg));
        }
    }
    out
}

/// Fills the shape, detection and A5 columns of a row from a fitted curve.
fn score_row(row: &mut ResultRow, est: &AdrfEstimate<f64>, truth: &[f64], mask: &[bool], p: f64) -> Result<()> {
    let sm = shape_metrics(&est.g_curve, truth, &est.grid)?;
    row.rmse_level = finite(sm.rmse_level);
    row.mae_level = finite(sm.mae_level);
    row.sup_err = finite(sm.sup_err);
    row.mase_deriv = finite(sm.mase_deriv);
    let det = detection_metrics(&est.sample_scores, mask, p)?;
    row.precision = finite(det.precision);
    row.recall = finite(det.recall);
    row.f1 = finite(det.f1);
    row.roc_auc = det.roc_auc.and_then(finite);
    row.pr_auc = det.pr_auc.and_then(finite);
    row.a5_frac = finite(est.a5_fraction());
    Ok(())
}

fn centered(v: &[f64]) -> Vec<f64> {
    let m = stats::mean(v);
    v.iter().map(|x| x - m).collect()
}

fn curve_rows(plan: &Plan, cell: &Cell, method: &str, extra: &str, est: &AdrfEstimate<f64>, truth: &[f64]) -> Vec<CurveRow> {
    let (e, t) = (centered(&est.g_curve), centered(truth));
    est.grid
        .iter()
        .enumerate()
        .map(|(j, &g)| CurveRow {
            preset: plan.preset.id().into(),
            dgp: cell.name(),
            method: method.into(),
            p_contam: cell.p,
            seed: cell.seed,
            extra: extra.into(),
            grid_index: j,
            t: g,
            estimate: e[j],
            truth: t[j],
        })
        .collect()
}

/// Generate, residualize once, then fit every method under every variant.
fn standard_cell(plan: &Plan, cell: &Cell, variants: &[Variant], curves: bool) -> PresetOutput {
    let (ds, res) = match cell.prepare(plan) {
        Ok(v) => v,
        Err(e) => return error_rows(plan, cell, variants, &e.to_string()),
    };
    let mut out = PresetOutput::default();
    for v in variants {
        for m in plan.preset.methods() {
            let mut row = cell.row(plan, m.name(), &v.extra);
            let fitted = fit_adrf(&res, m, &v.adrf).map_err(BenchError::from).and_then(|est| {
                let truth: Vec<f64> = est.grid.iter().map(|&t| true_theta(cell.dgp, t)).collect();
                score_row(&mut row, &est, &truth, &ds.outlier_mask, cell.p)?;
                if curves {
                    out.curves.extend(curve_rows(plan, cell, m.name(), &v.extra, &est, &truth));
                }
                Ok(())
            });
            out.results.push(match fitted {
                Ok(()) => row,
                Err(e) => row.failed(&e.to_string()),
            });
        }
    }
    out
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    (stats::mean(v), if v.len() > 1 { stats::std_dev(v) } else { 0.0 })
}

/// Full pipeline (residualize and fit) timed per method.
fn walltime_cell(plan: &Plan, cell: &Cell) -> PresetOutput {
    let seed = cell.data_seed(plan);
    let ds = match generate_with::<f64>(cell.dgp, cell.n, cell.p, seed, &cell.gen) {
        Ok(d) => d,
        Err(e) => return error_rows(plan, cell, &[Variant { extra: String::new(), adrf: plan.adrf.clone() }], &e.to_string()),
    };
    let reps = plan.cfg.walltime.repetitions;
    let extra_s = extra(&[("repetitions", reps.to_string())]);
    let mut out = PresetOutput::default();
    for m in plan.preset.methods() {
        let mut row = cell.row(plan, m.name(), &extra_s);
        let mut times = Vec::with_capacity(reps);
        let mut last = None;
        let mut failure = None;
        for _ in 0..reps {
            let start = Instant::now();
            let r = crossfit_residualize(&ds, &plan.learner, plan.cfg.nuisance.folds, rng::derive(seed, "folds", 0))
                .and_then(|res| fit_adrf(&res, m, &plan.adrf));
            times.push(start.elapsed().as_secs_f64());
            match r {
                Ok(est) => last = Some(est),
                Err(e) => failure = Some(e.to_string()),
            }
        }
        if let Some(msg) = failure {
            out.results.push(row.failed(&msg));
            continue;
        }
        let (mu, sd) = mean_sd(&times);
        row.walltime_s = finite(mu);
        row.walltime_sd = finite(sd);
        if let Some(est) = last {
            let truth: Vec<f64> = est.grid.iter().map(|&t| true_theta(cell.dgp, t)).collect();
            if let Err(e) = score_row(&mut row, &est, &truth, &ds.outlier_mask, cell.p) {
                row = row.failed(&e.to_string());
            }
        }
        out.results.push(row);
    }
    out
}

/// Percentile-bootstrap coverage of the centered curve over grid points. The grid
/// and bandwidth of the full-sample fit are held fixed across resamples.
fn coverage_cell(plan: &Plan, cell: &Cell) -> PresetOutput {
    let base = vec![Variant { extra: String::new(), adrf: plan.adrf.clone() }];
    let (ds, res) = match cell.prepare(plan) {
        Ok(v) => v,
        Err(e) => return error_rows(plan, cell, &base, &e.to_string()),
    };
    let b = plan.cfg.coverage.bootstrap;
    let level = plan.cfg.coverage.level;
    let extra_s = extra(&[("bootstrap", b.to_string()), ("level", level.to_string())]);
    let mut out = PresetOutput::default();
    for m in plan.preset.methods() {
        let mut row = cell.row(plan, m.name(), &extra_s);
        let r = (|| -> Result<()> {
            let est = fit_adrf(&res, m, &plan.adrf)?;
            let truth: Vec<f64> = est.grid.iter().map(|&t| true_theta(cell.dgp, t)).collect();
            score_row(&mut row, &est, &truth, &ds.outlier_mask, cell.p)?;
            let fixed = AdrfConfig { grid: Some(est.grid.clone()), bandwidth: Some(est.bandwidth), ..plan.adrf.clone() };
            let stream = plan.method_seed(&cell.name(), cell.p_index, cell.seed, m.name());
            let curves: Vec<Vec<f64>> = (0..b)
                .filter_map(|r| {
                    let idx = rng::resample_indices(stream, "coverage_bootstrap", r as u64, ds.n());
                    let boot = ds.resample(&idx);
                    let rr = crossfit_residualize(&boot, &plan.learner, plan.cfg.nuisance.folds, rng::derive(stream, "folds", r as u64)).ok()?;
                    fit_adrf(&rr, m, &fixed).ok().map(|e| centered(&e.g_curve))
                })
                .collect();
            if curves.len() < 2 {
                return Err(BenchError::Estimation(robust_adrf::AdrfError::Degenerate(
                    "fewer than two bootstrap refits succeeded".into(),
                )));
            }
            let t_c = centered(&truth);
            let alpha = (1.0 - level) / 2.0;
            let (mut hit, mut width) = (0usize, 0.0);
            for (j, &tj) in t_c.iter().enumerate() {
                let mut col: Vec<f64> = curves.iter().map(|c| c[j]).collect();
                col.sort_by(f64::total_cmp);
                let lo = stats::quantile_sorted(&col, alpha)?;
                let hi = stats::quantile_sorted(&col, 1.0 - alpha)?;
                hit += usize::from(lo <= tj && tj <= hi);
                width += hi - lo;
            }
            let g = t_c.len() as f64;
            row.coverage = finite(hit as f64 / g);
            row.ci_width = finite(width / g);
            Ok(())
        })();
        out.results.push(match r {
            Ok(()) => row,
            Err(e) => row.failed(&e.to_string()),
        });
    }
    out
}


fn with_pool<T: Send>(opts: &RunOptions, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| BenchError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn tail_row(plan: &Plan, cell: &Cell, source: &str, estimator: &str) -> TailRow {
    TailRow {
        preset: plan.preset.id().into(),
        dgp: cell.name(),
        p_contam: cell.p,
        seed: cell.seed,
        source: source.into(),
        estimator: estimator.into(),
        status: "ok".into(),
        ..TailRow::default()
    }
}

fn settle(mut row: TailRow, estimate: Option<f64>, failures: &[String]) -> TailRow {
    row.estimate = estimate.and_then(finite);
    if row.estimate.is_none() {
        row.status = "error".into();
        let prefix = format!("{}: ", row.estimator);
        let msg = failures.iter().find(|f| f.starts_with(&prefix)).cloned().unwrap_or_else(|| "estimate unavailable".into());
        row.error = crate::rows::clean_message(&msg);
    }
    row
}

/// Six estimator rows, diagnostic curves and a structured report for one cell.
fn tail_output(plan: &Plan, cell: &Cell, source: &str, t: &[f64], resid: &[f64], rep: &TailReport, seed: u64) -> PresetOutput {
    let b = plan.cfg.evt.bootstrap;
    let mut out = PresetOutput::default();
    let fails = &rep.failures;
    let k = (plan.cfg.evt.hill_k_frac * rep.n as f64).floor() as usize;
    let mut hill = tail_row(plan, cell, source, "hill");
    if let Some((lo, hi)) = rep.hill_alpha.and_then(|a| hill_interval(a, k).ok()) {
        hill.ci_low = finite(lo);
        hill.ci_high = finite(hi);
    }
    hill.tail_n = Some(k);
    out.tails.push(settle(hill, rep.hill_alpha, fails));
    for (name, fit, est) in [("gpd_mle", rep.gpd_mle, GpdEstimator::Mle), ("gpd_pwm", rep.gpd_pwm, GpdEstimator::Pwm)] {
        let mut row = tail_row(plan, cell, source, name);
        row.threshold = finite(rep.threshold);
        row.tail_n = Some(rep.tail_n);
        if let Some(g) = fit {
            row.sigma = finite(g.sigma);
            if let Ok((lo, hi)) = shape_interval(g, rep.tail_n, est, b, rng::derive(seed, name, 0)) {
                row.ci_low = finite(lo);
                row.ci_high = finite(hi);
            }
        }
        out.tails.push(settle(row, fit.map(|g| g.xi), fails));
    }
    let mut gev = tail_row(plan, cell, source, "gev");
    if let Some(g) = rep.gev {
        gev.sigma = finite(g.sigma);
        gev.mu = finite(g.mu);
    }
    out.tails.push(settle(gev, rep.gev.map(|g| g.xi), fails));
    let me = tail_row(plan, cell, source, "mean_excess");
    let me_shape = mean_excess_shape(&rep.mean_excess).ok();
    out.tails.push(settle(me, me_shape, fails));
    let ctc = tail_row(plan, cell, source, "causal_tail_coefficient");
    out.tails.push(settle(ctc, rep.gamma_ctc, fails));
    debug_assert_eq!(out.tails.len(), TAIL_ESTIMATORS.len());

    let point = |curve: &str, index: usize, x: f64, y: Option<f64>, lo: Option<f64>, hi: Option<f64>| TailCurveRow {
        dgp: cell.name(),
        p_contam: cell.p,
        seed: cell.seed,
        curve: curve.into(),
        index,
        x,
        y: y.and_then(finite),
        lo: lo.and_then(finite),
        hi: hi.and_then(finite),
    };
    for (i, (&ti, &r)) in t.iter().zip(resid).enumerate() {
        out.tail_curves.push(point("residual", i, ti, Some(r), None, None));
    }
    for (i, &(u, e)) in rep.mean_excess.iter().enumerate() {
        out.tail_curves.push(point("mean_excess", i, u, Some(e), None, None));
    }
    for (i, sp) in rep.stability.iter().enumerate() {
        out.tail_curves.push(point("stability", i, sp.threshold, sp.fit.map(|f| f.0), None, None));
        out.tail_curves.push(point("stability_scale", i, sp.threshold, sp.fit.map(|f| f.1), None, None));
    }
    for (i, rl) in rep.return_levels.iter().enumerate() {
        out.tail_curves.push(point("return_level", i, rl.prob, Some(rl.level), Some(rl.ci_low), Some(rl.ci_high)));
    }
    let rec = recommend(rep);
    let gpd = |g: Option<robust_adrf::evt::GpdFit>| g.map(|g| json!({"xi": g.xi, "sigma": g.sigma}));
    out.reports.push(json!({
        "key": format!("{}/{}/{}", cell.name(), cell.p, cell.seed),
        "dgp": cell.name(),
        "p_contam": cell.p,
        "seed": cell.seed,
        "source": source,
        "n": rep.n,
        "threshold": rep.threshold,
        "tail_n": rep.tail_n,
        "hill_alpha": rep.hill_alpha,
        "gpd_mle": gpd(rep.gpd_mle),
        "gpd_pwm": gpd(rep.gpd_pwm),
        "gev": rep.gev.map(|g| json!({"xi": g.xi, "sigma": g.sigma, "mu": g.mu})),
        "mean_excess_shape": me_shape,
        "gamma_ctc": rep.gamma_ctc,
        "return_levels": rep.return_levels.iter().map(|r| json!({
            "prob": r.prob, "level": r.level, "ci_low": r.ci_low, "ci_high": r.ci_high
        })).collect::<Vec<_>>(),
        "failures": rep.failures,
        "recommendation": {
            "domain": rec.domain.name(),
            "t_dependent": rec.t_dependence == TDependence::TDependent,
            "method": rec.method.name(),
            "ambiguous": rec.ambiguous,
        },
    }));
    out
}

/// Tail suite on the residuals of the configured source fit.
fn evt_cell(plan: &Plan, cell: &Cell) -> (PresetOutput, Option<TailReport>) {
    let source = plan.cfg.evt.residual_source.clone();
    let r = (|| -> Result<(Vec<f64>, Vec<f64>, TailReport, u64)> {
        let method: MethodKind = source.parse()?;
        let (_, res) = cell.prepare(plan)?;
        let est = fit_adrf(&res, method, &plan.adrf)?;
        let resid: Vec<f64> = res.y_tilde.iter().zip(&res.t_raw).map(|(&y, &t)| y - est.level_at(t)).collect();
        let seed = plan.method_seed(&cell.name(), cell.p_index, cell.seed, "evt");
        let tcfg = robust_adrf::evt::TailConfig { seed, ..plan.cfg.tail_config()? };
        let rep = tail_report(&resid, Some(&res.t_raw), &tcfg)?;
        Ok((res.t_raw.clone(), resid, rep, seed))
    })();
    match r {
        Ok((t, resid, rep, seed)) => (tail_output(plan, cell, &source, &t, &resid, &rep, seed), Some(rep)),
        Err(e) => {
            let mut out = PresetOutput::default();
            for name in TAIL_ESTIMATORS {
                let mut row = tail_row(plan, cell, &source, name);
                row.status = "error".into();
                row.error = crate::rows::clean_message(&e.to_string());
                out.tails.push(row);
            }
            (out, None)
        }
    }
}

fn mean_of(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| stats::mean(v))
}

/// Seed-averaged tail statistics per kind fed through the decision rule.
fn decision_rule_eval(plan: &Plan, opts: &RunOptions) -> Result<PresetOutput> {
    let cells = plan.cells(|&dgp, pi, p, s| Cell::new(dgp, pi, p, s, plan.n));
    let reports: Vec<Option<TailReport>> = with_pool(opts, || cells.par_iter().map(|c| evt_cell(plan, c).1).collect())?;
    let mut out = PresetOutput::default();
    for dgp in &plan.dgps {
        for &p in &plan.p {
            let mine: Vec<&TailReport> = cells
                .iter()
                .zip(&reports)
                .filter(|(c, _)| c.dgp == *dgp && c.p == p)
                .filter_map(|(_, r)| r.as_ref())
                .collect();
            let xi: Vec<f64> = mine.iter().filter_map(|r| r.gpd_mle.or(r.gpd_pwm)).map(|g| g.xi).collect();
            let alpha: Vec<f64> = mine.iter().filter_map(|r| r.hill_alpha).collect();
            let gamma: Vec<f64> = mine.iter().filter_map(|r| r.gamma_ctc).collect();
            let (xi, alpha, gamma) = (mean_of(&xi), mean_of(&alpha), mean_of(&gamma));
            let rec = robust_adrf::evt::decision_rule(xi.unwrap_or(f64::NAN), alpha.unwrap_or(f64::NAN), gamma);
            out.decisions.push(DecisionRow {
                dgp: dgp.to_string(),
                p_contam: p,
                seeds_used: mine.len(),
                xi_mle: xi.and_then(finite),
                hill_alpha: alpha.and_then(finite),
                gamma_ctc: gamma.and_then(finite),
                domain: rec.domain.name().into(),
                t_dependent: rec.t_dependence == TDependence::TDependent,
                recommended: rec.method.name().into(),
                ambiguous: rec.ambiguous,
            });
        }
    }
    out.sort();
    Ok(out)
}

fn multi_cell(plan: &Plan, d: usize, pi: usize, p: f64, s: u64) -> PresetOutput {
    let name = format!("multi_d{d}");
    let extra_s = extra(&[("d", d.to_string())]);
    let methods = [(MethodKind::StandardDml.name(), SurfaceMethod::Ols), (MethodKind::Shift.name(), SurfaceMethod::Shift)];
    let row = |m: &str| ResultRow::new(plan.preset.id(), m, &name, p, s, plan.n, extra_s.clone());
    let seed = plan.data_seed(&name, pi, s);
    let prepared = generate_multi::<f64>(d, plan.n, p, seed).and_then(|ds| {
        crossfit_residualize_multi(&ds, &plan.learner, plan.cfg.nuisance.folds, rng::derive(seed, "folds", 0))
    });
    let mut out = PresetOutput::default();
    match prepared {
        Err(e) => out.results.extend(methods.iter().map(|(m, _)| row(m).failed(&e.to_string()))),
        Ok(res) => {
            for (m, sm) in methods {
                let mut r = row(m);
                match fit_adrf_multid(&res, sm, &plan.adrf) {
                    Ok(est) => r.rmse_level = finite(est.centered_rmse(|t| true_theta_multi(t))),
                    Err(e) => r = r.failed(&e.to_string()),
                }
                out.results.push(r);
            }
        }
    }
    out
}

fn ts_cell(plan: &Plan, pi: usize, p: f64, s: u64) -> PresetOutput {
    let name = "ts_ar1";
    let ts = &plan.cfg.ts;
    let extra_s = extra(&[("rho", ts.rho.to_string()), ("window", ts.window.to_string()), ("buffer", ts.buffer.to_string())]);
    let seed = plan.data_seed(name, pi, s);
    let mut out = PresetOutput::default();
    let prepared = generate_ts::<f64>(plan.n, ts.rho, p, seed).map_err(BenchError::from).and_then(|ds| Ok((ds, plan.cfg.ts_config()?)));
    for m in plan.preset.methods() {
        let mut row = ResultRow::new(plan.preset.id(), m.name(), name, p, s, plan.n, extra_s.clone());
        let r = prepared.as_ref().map_err(|e| BenchError::Config(e.to_string())).and_then(|(ds, tcfg)| {
            let est = ts_fit(ds, m, tcfg, &plan.adrf, rng::derive(seed, "folds", 0))?;
            let truth: Vec<f64> = est.grid.iter().map(|&t| true_theta(DgpKind::Sinusoidal, t)).collect();
            score_row(&mut row, &est, &truth, &ds.outlier_mask, p)
        });
        out.results.push(match r {
            Ok(()) => row,
            Err(e) => row.failed(&e.to_string()),
        });
    }
    out
}

fn rx_cell(plan: &Plan, pi: usize, p: f64, s: u64) -> PresetOutput {
    let seed = plan.data_seed("binary", pi, s);
    let ds = generate_binary::<f64>(plan.n, p, seed);
    let cfg = plan.cfg.rx_config();
    let mut out = PresetOutput::default();
    for (name, robust) in [("rx_robust", true), ("rx_vanilla", false)] {
        let fit = ds.as_ref().map_err(Clone::clone).and_then(|d| rxlearner_fit(d, robust, &cfg, rng::derive(seed, "folds", 0)));
        let (cate_rmse, status, error) = match fit {
            Ok(e) => (finite(e.rmse_vs_truth), "ok".to_string(), String::new()),
            Err(e) => (None, "error".to_string(), crate::rows::clean_message(&e.to_string())),
        };
        out.rx.push(RxRow { preset: plan.preset.id().into(), method: name.into(), p_contam: p, seed: s, n: plan.n, cate_rmse, status, error });
    }
    out
}

/// Fraction of grid points whose kernel window is majority outlier; needs no fit.
fn a5_cell(plan: &Plan, cell: &Cell) -> PresetOutput {
    let mut row = cell.row(plan, "none", "");
    let r = (|| -> Result<f64> {
        let ds = generate_with::<f64>(cell.dgp, cell.n, cell.p, cell.data_seed(plan), &cell.gen)?;
        let grid = make_grid(&ds.t, plan.adrf.grid_size)?;
        let h = plan.adrf.h_scale * silverman_bandwidth(&ds.t)?;
        Ok(a5_failure_rate(&ds.t, &ds.outlier_mask, &grid, h)?)
    })();
    match r {
        Ok(v) => row.a5_frac = finite(v),
        Err(e) => row = row.failed(&e.to_string()),
    }
    PresetOutput { results: vec![row], ..PresetOutput::default() }
}

/// Median IRLS contraction ratio per annealing step of the SHIFT fit.
fn contraction_cell(plan: &Plan, cell: &Cell) -> PresetOutput {
    let schedule = &plan.adrf.gnc.schedule;
    let extra_at = |k: usize| extra(&[("step", k.to_string()), ("mu", schedule[k].to_string())]);
    let mut out = PresetOutput::default();
    let fitted = cell.prepare(plan).and_then(|(_, res)| Ok(fit_adrf(&res, MethodKind::Shift, &plan.adrf)?));
    match fitted {
        Err(e) => {
            for k in 0..schedule.len() {
                out.results.push(cell.row(plan, MethodKind::Shift.name(), &extra_at(k)).failed(&e.to_string()));
            }
        }
        Ok(est) => {
            for k in 0..schedule.len() {
                let ratios: Vec<f64> = est
                    .diagnostics
                    .iter()
                    .flat_map(|d| d.contraction_ratios.iter().filter(|(s, _)| *s == k).map(|&(_, r)| r))
                    .collect();
                let mut row = cell.row(plan, MethodKind::Shift.name(), &extra_at(k));
                match stats::median(&ratios) {
                    Ok(m) => row.contraction_median = finite(m),
                    Err(_) => row = row.failed("no contraction ratios recorded at this step"),
                }
                out.results.push(row);
            }
        }
    }
    out
}
