//! Experiment runner for the pinball map.
//!
//! Each experiment reads an [`ExperimentConfig`], runs the corresponding
//! analysis from `pinball-core` and writes CSV tables, SVG scatter plots and a
//! JSON report into `<out>/<experiment>/`. Timings go to a separate file so the
//! report itself is reproducible byte for byte.

pub mod alpha_expr;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod report;

pub use alpha_expr::parse_alpha;
pub use cli::{run_cli, Cli};
pub use config::{Experiment, ExperimentConfig, OUT_DIR_ENV};
pub use error::{ExpError, Result};
pub use experiments::{run_experiment, Outcome};
pub use report::{execute, write_outputs, Execution, RunReport, Verdict};
