//! Command-line surface: one subcommand per preset, `reproduce-all` and `aggregate`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};

use crate::aggregate::{pivot_markdown, summarize, SUMMARY_HEADER};
use crate::config::BenchConfig;
use crate::error::{BenchError, Result};
use crate::output::{results_file, write_output};
use crate::presets::{run_preset, Preset, RunOptions};
use crate::rows::{read_csv, write_csv, ResultRow, RESULT_HEADER};

fn about(p: Preset) -> &'static str {
    match p {
        Preset::MainSweep => "Seven methods on five kinds across contamination levels",
        Preset::Ablation => "Fixed-scale annealing against the shift-anchored variant",
        Preset::SensitivityN => "Sample size sweep",
        Preset::SensitivityGamma => "Anchor blend weight sweep",
        Preset::SensitivityBandwidth => "Bandwidth multiplier sweep",
        Preset::SensitivityPcov => "Covariate dimension sweep",
        Preset::TFamily => "Student-t jump family",
        Preset::Walltime => "Wall-clock cost per method",
        Preset::CoveragePercentile => "Percentile bootstrap coverage",
        Preset::DetectionCurves => "Outlier detection quality",
        Preset::CutoffSweep => "Refit cutoff multiplier sweep",
        Preset::EvtSuite => "Tail diagnostics on fitted residuals",
        Preset::DecisionRuleEval => "Estimator recommendation per kind",
        Preset::NuisanceAblation => "Nuisance learner swap",
        Preset::MultiTreatment => "Two and three dimensional treatments",
        Preset::TsBenchmark => "Serially dependent data",
        Preset::RxBenchmark => "Binary-treatment X-learner",
        Preset::IhdpBenchmark => "Semi-synthetic covariates",
        Preset::A5Table => "Majority-outlier window rate",
        Preset::ContractionDiag => "Annealing contraction ratios",
    }
}

pub fn command() -> Command {
    let globals = [
        Arg::new("seed").long("seed").global(true).value_parser(value_parser!(u64)).default_value("0").help("Root seed"),
        Arg::new("out")
            .long("out")
            .global(true)
            .env("ADRF_OUT_DIR")
            .value_parser(value_parser!(PathBuf))
            .default_value("results")
            .help("Output directory"),
        Arg::new("config").long("config").global(true).value_parser(value_parser!(PathBuf)).help("TOML config file"),
        Arg::new("jobs").long("jobs").global(true).value_parser(value_parser!(usize)).default_value("1").help("Worker threads"),
        Arg::new("n").long("n").global(true).value_parser(value_parser!(usize)).help("Sample size override"),
        Arg::new("seeds").long("seeds").global(true).value_parser(value_parser!(usize)).help("Seed count override"),
        Arg::new("dgp").long("dgp").global(true).value_delimiter(',').action(ArgAction::Append).help("Kind override"),
        Arg::new("p")
            .long("p")
            .global(true)
            .value_delimiter(',')
            .action(ArgAction::Append)
            .value_parser(value_parser!(f64))
            .help("Contamination override"),
        Arg::new("quiet").long("quiet").global(true).action(ArgAction::SetTrue).help("No progress output"),
    ];
    let mut cmd = Command::new("adrf-bench")
        .about("Robust dose-response benchmark harness")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .args(globals);
    for p in Preset::ALL {
        cmd = cmd.subcommand(Command::new(p.command()).about(about(p)));
    }
    cmd.subcommand(Command::new("reproduce-all").about("Every preset followed by the summary tables")).subcommand(
        Command::new("aggregate").about("Summary statistics and pivots of result tables").arg(
            Arg::new("input").required(true).num_args(1..).value_parser(value_parser!(PathBuf)).help("Result CSVs"),
        ),
    )
}

fn options(m: &ArgMatches) -> Result<RunOptions> {
    let mut config = match m.get_one::<PathBuf>("config") {
        Some(path) => BenchConfig::load(path)?,
        None => BenchConfig::default(),
    };
    if let Some(&n) = m.get_one::<usize>("n") {
        config.run.n = Some(n);
    }
    if let Some(&s) = m.get_one::<usize>("seeds") {
        config.run.seeds = Some(s);
    }
    if let Some(d) = m.get_many::<String>("dgp") {
        config.run.dgps = Some(d.cloned().collect());
    }
    if let Some(p) = m.get_many::<f64>("p") {
        config.run.p = Some(p.copied().collect());
    }
    config.validate()?;
    let jobs = *m.get_one::<usize>("jobs").expect("defaulted");
    if jobs == 0 {
        return Err(BenchError::Usage("--jobs must be at least 1".into()));
    }
    Ok(RunOptions { root_seed: *m.get_one::<u64>("seed").expect("defaulted"), jobs, quiet: m.get_flag("quiet"), config })
}

fn run_one(preset: Preset, opts: &RunOptions, out: &Path) -> Result<Vec<PathBuf>> {
    let output = run_preset(preset, opts)?;
    let files = write_output(preset, &output, out)?;
    if !opts.quiet {
        for f in &files {
            eprintln!("wrote {}", f.display());
        }
    }
    Ok(files)
}

/// Writes `summary.csv` and `summary.md` for the given result tables.
pub fn aggregate_files(inputs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    let mut rows: Vec<ResultRow> = Vec::new();
    for path in inputs {
        rows.extend(read_csv::<ResultRow>(path, &RESULT_HEADER)?);
    }
    let summary = summarize(&rows);
    std::fs::create_dir_all(out)?;
    let (csv, md) = (out.join("summary.csv"), out.join("summary.md"));
    write_csv(&csv, &summary, &SUMMARY_HEADER)?;
    std::fs::write(&md, pivot_markdown(&summary))?;
    Ok(vec![csv, md])
}

fn dispatch(m: &ArgMatches) -> Result<()> {
    let (name, sub) = m.subcommand().expect("subcommand required");
    let out = sub.get_one::<PathBuf>("out").expect("defaulted").clone();
    if name == "aggregate" {
        let inputs: Vec<PathBuf> = sub.get_many::<PathBuf>("input").expect("required").cloned().collect();
        let files = aggregate_files(&inputs, &out)?;
        if !sub.get_flag("quiet") {
            files.iter().for_each(|f| eprintln!("wrote {}", f.display()));
        }
        return Ok(());
    }
    let opts = options(sub)?;
    if name == "reproduce-all" {
        let mut tables = Vec::new();
        for p in Preset::ALL {
            run_one(p, &opts, &out)?;
            let path = out.join(results_file(p));
            if path.exists() {
                tables.push(path);
            }
        }
        aggregate_files(&tables, &out)?;
        return Ok(());
    }
    let preset: Preset = name.parse()?;
    run_one(preset, &opts, &out).map(|_| ())
}

/// Parses `args` (program name first) and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&matches) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("adrf-bench: {e}");
            match e {
                BenchError::Usage(_) => 2,
                _ => 1,
            }
        }
    }
}
