//! Run reports and the files written for each run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{ExpError, Result};
use crate::experiments::{run_experiment, Outcome};
use crate::output::TableInfo;

/// One asserted invariant and whether it held.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Everything about a run except its timings, so identical configs give
/// byte-identical reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub passed: bool,
    pub verdicts: Vec<Verdict>,
    pub escalations: Vec<String>,
    pub notes: Vec<String>,
    pub tables: Vec<TableInfo>,
    pub plots: Vec<String>,
    pub results: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub experiment: String,
    pub run_seconds: f64,
    pub write_seconds: f64,
}

pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";

impl RunReport {
    pub fn new(config: &ExperimentConfig, outcome: &Outcome) -> Self {
        RunReport {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config: config.clone(),
            passed: outcome.verdicts.iter().all(|v| v.passed),
            verdicts: outcome.verdicts.clone(),
            escalations: outcome.escalations.clone(),
            notes: outcome.notes.clone(),
            tables: outcome.tables.iter().map(TableInfo::from).collect(),
            plots: outcome.plots.iter().map(|p| p.file_name()).collect(),
            results: outcome.results.clone(),
        }
    }

    /// Process status: 0 when every verdict passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| ExpError::io(path, e))
}

/// Writes tables, plots and the report into `dir`; returns the paths written.
pub fn write_outputs(dir: &Path, report: &RunReport, outcome: &Outcome) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| ExpError::io(dir, e))?;
    let mut files = Vec::new();
    for t in &outcome.tables {
        let p = dir.join(t.file_name());
        t.write(&p)?;
        files.push(p);
    }
    for plot in &outcome.plots {
        let p = dir.join(plot.file_name());
        plot.write(&p)?;
        files.push(p);
    }
    let p = dir.join(REPORT_FILE);
    write_json(&p, report)?;
    files.push(p);
    Ok(files)
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub report: RunReport,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub timings: Timings,
}

/// Runs an experiment and writes its outputs under `out_dir/<experiment>`.
pub fn execute(config: &ExperimentConfig) -> Result<Execution> {
    let t0 = Instant::now();
    let outcome = run_experiment(config)?;
    let run_seconds = t0.elapsed().as_secs_f64();
    let report = RunReport::new(config, &outcome);
    let dir = config.out_dir.join(config.experiment.name());
    let t1 = Instant::now();
    let mut files = write_outputs(&dir, &report, &outcome)?;
    let timings = Timings {
        experiment: config.experiment.name().to_string(),
        run_seconds,
        write_seconds: t1.elapsed().as_secs_f64(),
    };
    let p = dir.join(TIMINGS_FILE);
    write_json(&p, &timings)?;
    files.push(p);
    Ok(Execution {
        report,
        dir,
        files,
        timings,
    })
}
