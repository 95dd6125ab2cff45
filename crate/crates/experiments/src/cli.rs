//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::Parser;

use crate::config::{read_config_file, Experiment, ExperimentConfig, OUT_DIR_ENV};
use crate::error::{ExpError, Result};
use crate::report::{execute, Execution};

#[derive(Debug, Parser)]
#[command(
    name = "pinball",
    version,
    about = "Run pinball-map experiments and write CSV, JSON and SVG outputs"
)]
#[command(
    after_help = "Experiments: simulate, return-map, intervals, renorm-check, escape, kesten, figure1\n\
Exit status: 0 all assertions pass, 1 assertion failure, 2 usage error, 3 runtime error"
)]
pub struct Cli {
    /// Experiment to run.
    pub experiment: Option<String>,
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// az, pinball, erdos-kesten, switching or sawtooth-fu (simulate only).
    #[arg(long)]
    pub map: Option<String>,
    /// α as an expression: `0.5`, `1/2`, `1/ln(2)`, `(sqrt(5)-1)/2`.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub z: Option<String>,
    /// Circle length.
    #[arg(long = "L")]
    pub l: Option<String>,
    /// az-half or pinball-proofs.
    #[arg(long)]
    pub variant: Option<String>,
    /// halt, plus or minus.
    #[arg(long)]
    pub singular: Option<String>,
    /// double, compensated, double-double, or auto (escape only).
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub phi0: Option<String>,
    #[arg(long = "I0")]
    pub i0: Option<String>,
    /// Comma-separated actions.
    #[arg(long = "I")]
    pub i: Option<String>,
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub steps: Option<String>,
    #[arg(long)]
    pub returns: Option<String>,
    #[arg(long)]
    pub decimation: Option<String>,
    #[arg(long)]
    pub m: Option<String>,
    #[arg(long = "N0")]
    pub n0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub perturb: Option<String>,
    /// printed or restored (renorm-check).
    #[arg(long)]
    pub formulas: Option<String>,
    /// Output directory; defaults to $PINBALL_OUT_DIR, then ./pinball-out.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long = "rng-seed")]
    pub rng_seed: Option<String>,
}

impl Cli {
    fn flags(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("experiment", &self.experiment),
            ("map", &self.map),
            ("alpha", &self.alpha),
            ("z", &self.z),
            ("L", &self.l),
            ("variant", &self.variant),
            ("singular", &self.singular),
            ("policy", &self.policy),
            ("phi0", &self.phi0),
            ("I0", &self.i0),
            ("I", &self.i),
            ("seeds", &self.seeds),
            ("grid", &self.grid),
            ("steps", &self.steps),
            ("returns", &self.returns),
            ("decimation", &self.decimation),
            ("m", &self.m),
            ("N0", &self.n0),
            ("perturb", &self.perturb),
            ("formulas", &self.formulas),
            ("out", &self.out),
            ("rng-seed", &self.rng_seed),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v)))
            .collect()
    }
}

/// Merges the config file (if any) with flags, flags winning.
pub fn parse_config(cli: &Cli, env_out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut map = match &cli.config {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    map.extend(cli.flags());
    ExperimentConfig::from_map(&map, env_out)
}

fn run(cli: &Cli, out: &mut dyn Write) -> Result<Execution> {
    let env_out = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let cfg = parse_config(cli, env_out)?;
    if cfg.experiment == Experiment::Figure1 {
        let _ = writeln!(
            out,
            "NOTE: figure1 uses alpha = {} (default 1; set --alpha to change)",
            cfg.alpha
        );
    }
    execute(&cfg)
}

/// Runs the CLI on `args` and returns the process status.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match run(&cli, out) {
        Ok(exec) => {
            for v in &exec.report.verdicts {
                let _ = writeln!(
                    out,
                    "{} {}: {}",
                    if v.passed { "PASS" } else { "FAIL" },
                    v.name,
                    v.detail
                );
            }
            for n in exec.report.notes.iter().chain(&exec.report.escalations) {
                let _ = writeln!(out, "note: {n}");
            }
            let _ = writeln!(out, "outputs: {}", exec.dir.display());
            let _ = writeln!(
                out,
                "elapsed: {:.2} s",
                exec.timings.run_seconds + exec.timings.write_seconds
            );
            exec.report.exit_code()
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if let ExpError::Usage { key, .. } = &e {
                if key == "experiment" {
                    let _ = writeln!(err, "experiments: {}", Experiment::list());
                }
            }
            e.exit_code()
        }
    }
}
