//! Config-driven experiments on top of `cavity_spectra`: JSON config in,
//! CSV tables, SVG charts and `report.json` out.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod report;

use std::path::Path;

pub use config::{load, resolve, ExperimentConfig, Resolved};
pub use error::{LabError, LabResult};
pub use experiments::{run_experiment, Outcome};
pub use report::Report;

/// Runs the experiment and writes every artifact into `out_dir`.
pub fn run(resolved: &Resolved, out_dir: &Path) -> LabResult<(Outcome, Report)> {
    let outcome = run_experiment(resolved)?;
    let report = report::write(resolved, &outcome, out_dir)?;
    Ok((outcome, report))
}
