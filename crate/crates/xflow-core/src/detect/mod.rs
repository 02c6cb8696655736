//! Stage 4's ML core: per-attack binary detectors, ensemble assembly and
//! routing, exploratory detector selection for unknown classes, and
//! feature-importance diagnostics.

mod forest;

pub use forest::{
    predict, train_forest, ForestHyperparams, MaxFeatures, Prediction, RandomForest, TreeNode,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::TrainSet;
use crate::evaluate::{confusion, f1};
use crate::flow::{feature_schema, AttackFamily, NetworkId, FEATURE_COUNT};
use crate::isolate::{CorpusSample, SampleId};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("training data must contain both benign and malicious samples")]
    SingleClass,
    #[error("a forest needs at least one tree")]
    NoTrees,
    #[error("feature vector has {got} entries, schema expects {expected}")]
    WrongArity { expected: usize, got: usize },
    #[error("{features} feature rows vs {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error(
        "exploratory reserve is empty; use a larger cell or a larger reserve fraction"
    )]
    EmptyReserve,
    #[error("ensemble has no detectors")]
    NoDetectors,
    #[error("model file {path}: expected schema `{expected}`, found `{found}`")]
    SchemaMismatch {
        path: String,
        expected: String,
        found: String,
    },
    #[error("model serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Identity of one detector: the grid cell it was trained on.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct DetectorId {
    pub network: NetworkId,
    pub class: usize,
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "net{}-class{}", self.network, self.class)
    }
}

/// A binary detector: origin benign traffic versus one attack class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    pub id: DetectorId,
    pub class_name: String,
    pub family: AttackFamily,
    /// Canonical key of the training set this detector came from.
    pub train_provenance: String,
    pub model: RandomForest,
}

impl Detector {
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, DetectError> {
        predict(&self.model, x)
    }
}

/// The per-attack detectors of one origin network plus class routing.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorEnsemble {
    pub origin: NetworkId,
    pub detectors: Vec<Detector>,
    /// Class column to detector. When several detectors cover a class the
    /// lowest detector id wins, deterministically.
    pub routing: BTreeMap<usize, DetectorId>,
}

impl DetectorEnsemble {
    pub fn detector(&self, id: DetectorId) -> Option<&Detector> {
        self.detectors.iter().find(|d| d.id == id)
    }

    /// Exact-cell routing first, then by class.
    pub fn route(&self, network: NetworkId, class: usize) -> Option<DetectorId> {
        let exact = DetectorId { network, class };
        if self.detector(exact).is_some() {
            return Some(exact);
        }
        self.routing.get(&class).copied()
    }
}

/// A detector that failed to train; siblings are unaffected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorFailure {
    pub id: DetectorId,
    pub class_name: String,
    pub error: String,
}

fn training_rows(
    benign: &[CorpusSample],
    malicious: &[CorpusSample],
) -> (Vec<[f64; FEATURE_COUNT]>, Vec<bool>) {
    let mut xs = Vec::with_capacity(benign.len() + malicious.len());
    let mut ys = Vec::with_capacity(benign.len() + malicious.len());
    for s in benign {
        xs.push(s.features);
        ys.push(false);
    }
    for s in malicious {
        xs.push(s.features);
        ys.push(true);
    }
    (xs, ys)
}

/// Trains one detector per cell of the training set: origin benign train
/// part plus that cell's malicious train part. Per-detector seeds derive
/// from the cell coordinates, so a cell always trains identically under the
/// same seed regardless of which ensemble it joins.
pub fn train_ensemble(
    train: &TrainSet,
    hp: &ForestHyperparams,
    seed: u64,
) -> (DetectorEnsemble, Vec<DetectorFailure>) {
    let mut detectors = Vec::with_capacity(train.cells.len());
    let mut failures = Vec::new();
    let mut routing = BTreeMap::new();

    for cell in &train.cells {
        let id = DetectorId {
            network: cell.network,
            class: cell.class,
        };
        let (xs, ys) = training_rows(&train.benign, &cell.samples);
        let cell_tag = ((cell.network.0 as u64) << 32) | cell.class as u64;
        match train_forest(&xs, &ys, hp, derive_seed(seed, "detector", cell_tag)) {
            Ok(model) => {
                detectors.push(Detector {
                    id,
                    class_name: cell.class_name.clone(),
                    family: cell.family,
                    train_provenance: train.key.to_string(),
                    model,
                });
                routing.entry(cell.class).or_insert(id);
            }
            Err(err) => failures.push(DetectorFailure {
                id,
                class_name: cell.class_name.clone(),
                error: err.to_string(),
            }),
        }
    }

    (
        DetectorEnsemble {
            origin: train.origin,
            detectors,
            routing,
        },
        failures,
    )
}

/// Outcome of exploratory selection for one unknown class.
#[derive(Clone, Debug, PartialEq)]
pub struct ExploratorySelection {
    pub detector: DetectorId,
    /// Sample ids consumed by the probe; they must not be evaluated later.
    pub reserved: BTreeSet<SampleId>,
    /// Per-detector F1 on the probe, for diagnostics.
    pub scores: Vec<(DetectorId, f64)>,
}

/// Picks the most suitable existing detector for a class absent from
/// training: reserve a seeded portion of the unknown cell, pit every
/// detector against it (plus a benign probe), keep the best F1. Ties go to
/// the lowest detector id.
pub fn select_detector_exploratory(
    ensemble: &DetectorEnsemble,
    unknown_cell: &[CorpusSample],
    benign_pool: &[CorpusSample],
    reserve_frac: f64,
    benign_probe_frac: f64,
    seed: u64,
) -> Result<ExploratorySelection, DetectError> {
    if ensemble.detectors.is_empty() {
        return Err(DetectError::NoDetectors);
    }
    let n_reserve = (reserve_frac * unknown_cell.len() as f64).ceil() as usize;
    if n_reserve == 0 {
        return Err(DetectError::EmptyReserve);
    }

    let mut indices: Vec<usize> = (0..unknown_cell.len()).collect();
    indices.shuffle(&mut rng_from_seed(derive_seed(seed, "exploratory-reserve", 0)));
    let reserved_samples: Vec<&CorpusSample> = indices[..n_reserve.min(unknown_cell.len())]
        .iter()
        .map(|&i| &unknown_cell[i])
        .collect();

    let mut benign_idx: Vec<usize> = (0..benign_pool.len()).collect();
    benign_idx.shuffle(&mut rng_from_seed(derive_seed(seed, "exploratory-probe", 0)));
    let mut n_probe = (benign_probe_frac * benign_pool.len() as f64).floor() as usize;
    if n_probe == 0 && !benign_pool.is_empty() {
        n_probe = 1;
    }
    let probe: Vec<&CorpusSample> = benign_idx[..n_probe].iter().map(|&i| &benign_pool[i]).collect();

    let truth: Vec<bool> = reserved_samples
        .iter()
        .map(|_| true)
        .chain(probe.iter().map(|_| false))
        .collect();

    let mut scores = Vec::with_capacity(ensemble.detectors.len());
    let mut detectors: Vec<&Detector> = ensemble.detectors.iter().collect();
    detectors.sort_by_key(|d| d.id);
    for det in &detectors {
        let predictions: Vec<bool> = reserved_samples
            .iter()
            .chain(probe.iter())
            .map(|s| det.predict(&s.features).map(|p| p.malicious))
            .collect::<Result<_, _>>()?;
        let cm = confusion(&predictions, &truth).expect("lengths match by construction");
        // Reserve is non-empty, so tp + fn > 0 and F1 is defined.
        let score = f1(&cm).unwrap_or(0.0);
        scores.push((det.id, score));
    }

    let best = scores
        .iter()
        .copied()
        .max_by(|(id_a, a), (id_b, b)| a.total_cmp(b).then(id_b.cmp(id_a)))
        .expect("at least one detector");

    Ok(ExploratorySelection {
        detector: best.0,
        reserved: reserved_samples.iter().map(|s| s.id).collect(),
        scores,
    })
}

/// Importance matrix across detectors plus per-feature agreement spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub rows: Vec<ImportanceRow>,
    /// max - min importance per feature across detectors.
    pub spread: [f64; FEATURE_COUNT],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub detector: DetectorId,
    pub class_name: String,
    pub importances: [f64; FEATURE_COUNT],
}

impl ImportanceReport {
    /// Feature columns of the top-k importances per detector, descending.
    pub fn top_k(&self, k: usize) -> Vec<(DetectorId, Vec<&'static str>)> {
        self.rows
            .iter()
            .map(|row| {
                let mut order: Vec<usize> = (0..FEATURE_COUNT).collect();
                order.sort_by(|&a, &b| {
                    row.importances[b]
                        .total_cmp(&row.importances[a])
                        .then(a.cmp(&b))
                });
                let names = order
                    .into_iter()
                    .take(k)
                    .map(|i| feature_schema()[i].column)
                    .collect();
                (row.detector, names)
            })
            .collect()
    }

    /// CSV with one row per detector and a final `spread` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("detector,class");
        for desc in feature_schema() {
            out.push(',');
            out.push_str(desc.column);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.detector.to_string());
            out.push(',');
            out.push_str(&row.class_name);
            for v in row.importances {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out.push_str("spread,");
        for v in self.spread {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
        out
    }
}

/// Collects importances across detectors trained on the common schema.
pub fn feature_importance_report(detectors: &[Detector]) -> ImportanceReport {
    let rows: Vec<ImportanceRow> = detectors
        .iter()
        .map(|d| ImportanceRow {
            detector: d.id,
            class_name: d.class_name.clone(),
            importances: d.model.importances,
        })
        .collect();
    let mut spread = [0.0; FEATURE_COUNT];
    if !rows.is_empty() {
        for (i, item) in spread.iter_mut().enumerate() {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for row in &rows {
                lo = lo.min(row.importances[i]);
                hi = hi.max(row.importances[i]);
            }
            *item = hi - lo;
        }
    }
    ImportanceReport { rows, spread }
}

pub const DETECTOR_SCHEMA_VERSION: &str = "xflow.detector.v1";

/// On-disk form of a detector: self-describing JSON.
#[derive(Serialize, Deserialize)]
struct DetectorFile {
    schema_version: String,
    #[serde(flatten)]
    detector: Detector,
}

pub fn write_detector(path: impl AsRef<Path>, detector: &Detector) -> Result<(), DetectError> {
    let file = DetectorFile {
        schema_version: DETECTOR_SCHEMA_VERSION.to_string(),
        detector: detector.clone(),
    };
    let json = serde_json::to_vec_pretty(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_detector(path: impl AsRef<Path>) -> Result<Detector, DetectError> {
    let bytes = std::fs::read(path.as_ref())?;
    let file: DetectorFile = serde_json::from_slice(&bytes)?;
    if file.schema_version != DETECTOR_SCHEMA_VERSION {
        return Err(DetectError::SchemaMismatch {
            path: path.as_ref().display().to_string(),
            expected: DETECTOR_SCHEMA_VERSION.to_string(),
            found: file.schema_version,
        });
    }
    Ok(file.detector)
}
