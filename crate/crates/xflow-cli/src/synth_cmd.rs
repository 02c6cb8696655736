//! The `synth` command: generate a corpus from a manifest.

use std::path::{Path, PathBuf};

use xflow_core::io::write_flow_records_path;
use xflow_core::synth::{generate_corpus, CorpusSpec};

use crate::CliError;

/// Generates every network of the manifest into `out_dir` as ingestion
/// CSVs, plus a copy of the manifest sufficient to regenerate them.
pub fn cmd_synth(manifest_path: &Path, out_dir: &Path) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| CliError::Synth(format!("cannot read {}: {e}", manifest_path.display())))?;
    let spec: CorpusSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Synth(format!("manifest schema: {e}")))?;
    spec.validate()
        .map_err(|e| CliError::Synth(e.to_string()))?;

    let corpus = generate_corpus(&spec).map_err(|e| CliError::Synth(e.to_string()))?;

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Pipeline(e.to_string()))?;
    let mut written: Vec<PathBuf> = Vec::new();
    for (records, descriptor) in &corpus {
        let path = out_dir.join(format!("{}.csv", descriptor.name));
        write_flow_records_path(&path, records)
            .map_err(|e| CliError::Pipeline(format!("write {}: {e}", path.display())))?;
        log::info!("wrote {} ({} records)", path.display(), records.len());
        written.push(path);
    }

    let manifest_copy = serde_json::to_string_pretty(&spec)
        .map_err(|e| CliError::Pipeline(e.to_string()))?;
    std::fs::write(out_dir.join("manifest.json"), manifest_copy + "\n")
        .map_err(|e| CliError::Pipeline(e.to_string()))?;

    println!(
        "generated {} networks into {}",
        corpus.len(),
        out_dir.display()
    );
    Ok(0)
}
