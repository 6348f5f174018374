//! `report.json` and the output directory.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Resolved};
use crate::error::{LabError, LabResult};
use crate::experiments::Outcome;
use crate::output::write_atomic;

#[derive(Debug, Clone)]
pub struct Report {
    pub dir: PathBuf,
    /// Written file names, `report.json` last.
    pub files: Vec<String>,
    pub json: Value,
}

/// `sha256("blob <len>\0" + bytes)` of the resolved config without its
/// output path, so moving the output does not change the hash.
pub fn input_hash(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.output = None;
    let bytes = serde_json::to_vec(&c).expect("config serializes");
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(&bytes);
    let digest: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{digest}")
}

pub fn write(resolved: &Resolved, outcome: &Outcome, dir: &Path) -> LabResult<Report> {
    std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let mut files = Vec::new();
    for table in &outcome.tables {
        write_atomic(&dir.join(&table.name), table.to_csv().as_bytes())?;
        files.push(table.name.clone());
    }
    for (name, svg) in &outcome.charts {
        write_atomic(&dir.join(name), svg.as_bytes())?;
        files.push(name.clone());
    }
    files.push("report.json".into());
    let mut config = resolved.config.clone();
    config.output = None;
    let json = json!({
        "tool": "cavity-spectra",
        "version": env!("CARGO_PKG_VERSION"),
        "kind": resolved.config.kind.as_str(),
        "input_hash": input_hash(&resolved.config),
        "config": config,
        "results": outcome.results,
        "files": files,
    });
    let mut text = serde_json::to_string_pretty(&json).expect("report serializes");
    text.push('\n');
    write_atomic(&dir.join("report.json"), text.as_bytes())?;
    Ok(Report { dir: dir.to_path_buf(), files, json })
}
