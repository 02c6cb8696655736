//! Run configuration: schema, loading, validation and class-name
//! resolution.
//!
//! A run config names the input datasets with their descriptors and
//! standardization settings, an optional granularity map, detector
//! hyperparameters, and exactly one of `contexts` (explicit context tuples)
//! or `workflow` (one of the four canned workflows).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use xflow_core::context::{ContextSpec, Split};
use xflow_core::detect::{ForestHyperparams, MaxFeatures};
use xflow_core::flow::{DatasetDescriptor, NetworkId, Protocol};
use xflow_core::isolate::{GranularityMap, MaliciousMatrix};
use xflow_core::standardize::{DurationPolicy, NetProfileConfig};
use xflow_core::workflow::{ExploratoryConfig, WorkflowKind, WorkflowPlan};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("config must supply exactly one of `contexts` or `workflow`")]
    ModeExclusivity,
    #[error("dataset path does not exist: {0}")]
    MissingDataset(PathBuf),
    #[error("config names no datasets")]
    NoDatasets,
    #[error("unknown attack class `{0}` in a context spec")]
    UnknownClass(String),
    #[error("class index {0} is outside the corpus grid")]
    ClassIndexOutOfRange(usize),
    #[error("workflow requested on the command line but the config is in contexts mode")]
    WorkflowOverrideInContextsMode,
    #[error("{0}")]
    Invalid(String),
}

/// One input dataset: where it lives and how to standardize it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub descriptor: DatasetDescriptor,
    #[serde(default)]
    pub protocol_filter: Option<Vec<Protocol>>,
    #[serde(default)]
    pub duration_policy: DurationPolicy,
}

impl DatasetConfig {
    pub fn profile(&self) -> NetProfileConfig {
        NetProfileConfig {
            descriptor: self.descriptor.clone(),
            protocol_filter: self.protocol_filter.clone(),
            duration_policy: self.duration_policy,
        }
    }
}

/// Detector settings: forest hyperparameters plus exploratory-selection
/// knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub exploratory: bool,
    pub reserve_frac: f64,
    pub benign_probe_frac: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        let hp = ForestHyperparams::default();
        let ex = ExploratoryConfig::default();
        DetectorConfig {
            n_trees: hp.n_trees,
            max_depth: hp.max_depth,
            min_samples_split: hp.min_samples_split,
            max_features: hp.max_features,
            bootstrap: hp.bootstrap,
            exploratory: ex.enabled,
            reserve_frac: ex.reserve_frac,
            benign_probe_frac: ex.benign_probe_frac,
        }
    }
}

impl DetectorConfig {
    pub fn hyperparams(&self) -> ForestHyperparams {
        ForestHyperparams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            max_features: self.max_features,
            bootstrap: self.bootstrap,
        }
    }

    pub fn exploratory_config(&self) -> ExploratoryConfig {
        ExploratoryConfig {
            enabled: self.exploratory,
            reserve_frac: self.reserve_frac,
            benign_probe_frac: self.benign_probe_frac,
        }
    }
}

/// A class reference in a context spec: grid column index or class name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassRef {
    Index(usize),
    Name(String),
}

impl ClassRef {
    fn resolve(&self, matrix: &MaliciousMatrix) -> Result<usize, ConfigError> {
        match self {
            ClassRef::Index(i) => {
                if *i < matrix.class_count() {
                    Ok(*i)
                } else {
                    Err(ConfigError::ClassIndexOutOfRange(*i))
                }
            }
            ClassRef::Name(name) => matrix
                .class_position(name)
                .ok_or_else(|| ConfigError::UnknownClass(name.clone())),
        }
    }
}

/// A context tuple as written in the config; class references may be names
/// and are resolved against the isolated corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextConfig {
    pub o: u32,
    pub t: Vec<u32>,
    pub tau: Vec<ClassRef>,
    pub e: Vec<u32>,
    pub eps: Vec<ClassRef>,
    #[serde(default)]
    pub split_n: Option<Split>,
    #[serde(default)]
    pub split_m: Option<Split>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ContextConfig {
    pub fn resolve(
        &self,
        matrix: &MaliciousMatrix,
        default_seed: u64,
    ) -> Result<ContextSpec, ConfigError> {
        let resolve_all = |refs: &[ClassRef]| -> Result<Vec<usize>, ConfigError> {
            refs.iter().map(|r| r.resolve(matrix)).collect()
        };
        Ok(ContextSpec {
            origin: NetworkId(self.o),
            train_networks: self.t.iter().copied().map(NetworkId).collect(),
            train_classes: resolve_all(&self.tau)?,
            eval_networks: self.e.iter().copied().map(NetworkId).collect(),
            eval_classes: resolve_all(&self.eps)?,
            split_benign: self.split_n.unwrap_or_default(),
            split_malicious: self.split_m.unwrap_or_default(),
            seed: self.seed.unwrap_or(default_seed),
        })
    }
}

/// Workflow request inside a config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkflowConfig {
    pub kind: WorkflowKind,
    pub origin: u32,
    #[serde(default)]
    pub repetitions: Option<u32>,
    #[serde(default)]
    pub split_n: Option<Split>,
    #[serde(default)]
    pub split_m: Option<Split>,
}

impl WorkflowConfig {
    pub fn plan(&self, detector: &DetectorConfig, seed: u64) -> WorkflowPlan {
        WorkflowPlan {
            kind: self.kind,
            origin: NetworkId(self.origin),
            hyperparams: detector.hyperparams(),
            repetitions: self.repetitions.unwrap_or(5),
            seed,
            split_benign: self.split_n.unwrap_or_default(),
            split_malicious: self.split_m.unwrap_or_default(),
            exploratory: detector.exploratory_config(),
        }
    }
}

/// The full run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub granularity: GranularityMap,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contexts: Option<Vec<ContextConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workflow: Option<WorkflowConfig>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Loads and validates a config. Relative dataset paths resolve
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for dataset in &mut config.datasets {
            if dataset.path.is_relative() {
                dataset.path = base.join(&dataset.path);
            }
        }
        if config.out_dir.is_relative() {
            config.out_dir = base.join(&config.out_dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (&self.contexts, &self.workflow) {
            (Some(_), Some(_)) | (None, None) => return Err(ConfigError::ModeExclusivity),
            _ => {}
        }
        if self.datasets.is_empty() {
            return Err(ConfigError::NoDatasets);
        }
        for dataset in &self.datasets {
            if !dataset.path.exists() {
                return Err(ConfigError::MissingDataset(dataset.path.clone()));
            }
        }
        if !(0.0..=1.0).contains(&self.detector.reserve_frac)
            || !(0.0..=1.0).contains(&self.detector.benign_probe_frac)
        {
            return Err(ConfigError::Invalid(
                "reserve_frac and benign_probe_frac must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Families referenced by the run report's flat table, in column order.
pub const TABLE_FAMILIES: [&str; 3] = ["botnet", "dos", "other"];

/// Index of class names to columns for error messages.
pub fn class_summary(matrix: &MaliciousMatrix) -> BTreeMap<String, usize> {
    matrix
        .class_index()
        .iter()
        .enumerate()
        .map(|(i, name)| (name.clone(), i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json(dir: &Path) -> String {
        let csv = dir.join("data.csv");
        std::fs::write(
            &csv,
            "src_ip,dst_ip,src_port,dst_port,timestamp,duration,protocol,in_bytes,out_bytes,in_packets,out_packets,direction,label,attack_class\n",
        )
        .unwrap();
        format!(
            r#"{{
  "seed": 42,
  "datasets": [
    {{
      "path": "data.csv",
      "descriptor": {{
        "network_id": 1,
        "name": "alpha",
        "internal_subnets": ["10.0.0.0/8"],
        "duration_unit": "seconds"
      }}
    }}
  ],
  "workflow": {{ "kind": "baseline", "origin": 1 }}
}}"#
        )
    }

    #[test]
    fn loads_minimal_workflow_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, minimal_json(dir.path())).unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.seed, 42);
        assert!(config.datasets[0].path.is_absolute() || config.datasets[0].path.exists());
        assert_eq!(config.detector.n_trees, 100);
        assert_eq!(config.workflow.as_ref().unwrap().kind, WorkflowKind::Baseline);
    }

    #[test]
    fn rejects_both_modes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let mut json: serde_json::Value =
            serde_json::from_str(&minimal_json(dir.path())).unwrap();
        json["contexts"] = serde_json::json!([]);
        std::fs::write(&path, serde_json::to_string(&json).unwrap()).unwrap();
        assert!(matches!(
            RunConfig::load(&path),
            Err(ConfigError::ModeExclusivity)
        ));
    }

    #[test]
    fn rejects_missing_dataset_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let mut json: serde_json::Value =
            serde_json::from_str(&minimal_json(dir.path())).unwrap();
        json["datasets"][0]["path"] = serde_json::json!("nope.csv");
        std::fs::write(&path, serde_json::to_string(&json).unwrap()).unwrap();
        match RunConfig::load(&path) {
            Err(ConfigError::MissingDataset(p)) => {
                assert!(p.to_string_lossy().contains("nope.csv"));
            }
            other => panic!("expected MissingDataset, got {other:?}"),
        }
    }

    #[test]
    fn config_roundtrips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, minimal_json(dir.path())).unwrap();
        let config = RunConfig::load(&path).unwrap();
        let json = serde_json::to_string_pretty(&config).unwrap();
        let parsed: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, config);
    }
}
