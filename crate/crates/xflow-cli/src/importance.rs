//! The `importance` command: feature-importance diagnostics from persisted
//! detector models.

use std::path::{Path, PathBuf};

use xflow_core::detect::{feature_importance_report, read_detector, Detector};

use crate::CliError;

/// Reads serialized detectors, writes the detector-by-feature importance
/// CSV (with a final spread row) and prints the top-k features of each
/// detector.
pub fn cmd_importance(models: &[PathBuf], out: &Path, top_k: usize) -> Result<i32, CliError> {
    let mut detectors: Vec<Detector> = Vec::with_capacity(models.len());
    for path in models {
        let detector = read_detector(path)
            .map_err(|e| CliError::Pipeline(format!("{}: {e}", path.display())))?;
        detectors.push(detector);
    }

    let report = feature_importance_report(&detectors);
    std::fs::write(out, report.to_csv())
        .map_err(|e| CliError::Pipeline(format!("write {}: {e}", out.display())))?;

    for (detector, features) in report.top_k(top_k) {
        let class = report
            .rows
            .iter()
            .find(|r| r.detector == detector)
            .map(|r| r.class_name.as_str())
            .unwrap_or("?");
        println!("{detector} ({class}): {}", features.join(", "));
    }
    println!("importance matrix written to {}", out.display());
    Ok(0)
}
