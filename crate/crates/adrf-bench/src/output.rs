//! File layout of a preset run.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::presets::{Preset, PresetOutput};
use crate::rows::{
    write_csv, CURVE_HEADER, DECISION_HEADER, RESULT_HEADER, RX_HEADER, TAIL_CURVE_HEADER, TAIL_HEADER,
};

/// Name of the per-fit results table of a preset.
pub fn results_file(preset: Preset) -> String {
    match preset {
        Preset::MainSweep => "verification_results.csv".into(),
        Preset::TsBenchmark => "benchmark_ts.csv".into(),
        p => format!("{}.csv", p.id()),
    }
}

/// Writes the tables a preset produces into `dir` and returns their paths.
pub fn write_output(preset: Preset, out: &PresetOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    match preset {
        Preset::EvtSuite => {
            write_csv(&put("tail_report.csv".into()), &out.tails, &TAIL_HEADER)?;
            write_csv(&put("tail_curves.csv".into()), &out.tail_curves, &TAIL_CURVE_HEADER)?;
            let json = serde_json::to_vec_pretty(&out.reports)?;
            std::fs::write(put("tail_reports.json".into()), json)?;
        }
        Preset::DecisionRuleEval => write_csv(&put("decision_rule.csv".into()), &out.decisions, &DECISION_HEADER)?,
        Preset::RxBenchmark => write_csv(&put("benchmark_rx.csv".into()), &out.rx, &RX_HEADER)?,
        _ => {
            write_csv(&put(results_file(preset)), &out.results, &RESULT_HEADER)?;
            if preset == Preset::MainSweep {
                write_csv(&put(format!("{}_curves.csv", preset.id())), &out.curves, &CURVE_HEADER)?;
            }
        }
    }
    Ok(written)
}
