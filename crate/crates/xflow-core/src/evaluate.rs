//! Metrics and per-context evaluation.
//!
//! F1 = tp / (0.5 (fp + fn) + tp), computed as 2 tp / (2 tp + fp + fn) so
//! the result is a single correctly-rounded rational. FPR = fp / (fp + tn),
//! i.e. over benign samples only. Undefined denominators yield `None`, not
//! a number.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{ContextRelations, ContextCode, EvalSet};
use crate::detect::{DetectError, Detector, DetectorEnsemble, DetectorFailure, DetectorId};
use crate::flow::{AttackFamily, NetworkId};
use crate::isolate::SampleId;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions vs {truth} truth labels")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("class `{class_name}` of network {network} is not routable and exploratory selection is disabled")]
    Unroutable {
        network: NetworkId,
        class_name: String,
    },
    #[error("routed detector {0} is not part of the ensemble")]
    MissingDetector(DetectorId),
    #[error("reports have mismatched structure: {0}")]
    StructuralMismatch(String),
    #[error("no reports to average")]
    NoReports,
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Context(#[from] crate::context::ContextError),
}

/// Binary confusion counts. Positive = malicious.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(rename = "tp")]
    pub true_pos: u64,
    #[serde(rename = "fp")]
    pub false_pos: u64,
    #[serde(rename = "fn")]
    pub false_neg: u64,
    #[serde(rename = "tn")]
    pub true_neg: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

/// Tallies predictions against ground truth.
pub fn confusion(predictions: &[bool], truth: &[bool]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truth) {
        match (p, t) {
            (true, true) => cm.true_pos += 1,
            (true, false) => cm.false_pos += 1,
            (false, true) => cm.false_neg += 1,
            (false, false) => cm.true_neg += 1,
        }
    }
    Ok(cm)
}

/// F1 score; `None` when tp + fp + fn = 0.
pub fn f1(cm: &ConfusionMatrix) -> Option<f64> {
    let denominator = 2 * cm.true_pos + cm.false_pos + cm.false_neg;
    if denominator == 0 {
        return None;
    }
    Some((2 * cm.true_pos) as f64 / denominator as f64)
}

/// False positive rate over benign samples; `None` when fp + tn = 0.
pub fn fpr(cm: &ConfusionMatrix) -> Option<f64> {
    let denominator = cm.false_pos + cm.true_neg;
    if denominator == 0 {
        return None;
    }
    Some(cm.false_pos as f64 / denominator as f64)
}

/// How the detector for an evaluated cell was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKind {
    /// A detector trained on exactly this cell.
    OwnCell,
    /// A detector trained on the same class in another network.
    SharedClass,
    /// Chosen by exploratory selection.
    Exploratory,
}

/// Outcome for one evaluated (network, class) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub eval_network: NetworkId,
    pub class: usize,
    pub class_name: String,
    pub family: AttackFamily,
    pub detector: DetectorId,
    pub route: RouteKind,
    pub confusion: ConfusionMatrix,
    pub f1: Option<f64>,
    pub fpr: Option<f64>,
    pub malicious_evaluated: u64,
}

/// Context identification attached to a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextSummary {
    pub code: ContextCode,
    pub relations: ContextRelations,
    pub origin: NetworkId,
    pub train_key: String,
    pub eval_key: String,
    pub seed: u64,
}

/// Report for one evaluation pass of one ensemble against one eval set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextSummary>,
    pub entries: Vec<EvalEntry>,
    /// Unweighted mean F1 per family, over entries with a defined F1.
    pub per_family: BTreeMap<AttackFamily, f64>,
    /// Mean of the per-entry FPR values.
    pub avg_fpr: Option<f64>,
    /// FPR counting a benign sample as a false positive when any detector
    /// of the ensemble alarms. Stricter than `avg_fpr`; reported
    /// separately.
    pub union_alarm_fpr: Option<f64>,
    pub benign_evaluated: u64,
    #[serde(default)]
    pub failures: Vec<DetectorFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caveat: Option<String>,
}

/// Exploratory routing decided before evaluation: per-cell detector picks
/// plus the reserved sample ids that must stay out of every evaluated set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExploratoryRoutes {
    pub by_cell: BTreeMap<(NetworkId, usize), DetectorId>,
    pub reserved: BTreeSet<SampleId>,
}

fn predict_all(detector: &Detector, samples: &[&crate::isolate::CorpusSample]) -> Result<Vec<bool>, DetectError> {
    samples
        .iter()
        .map(|s| detector.predict(&s.features).map(|p| p.malicious))
        .collect()
}

/// Scores an ensemble against an evaluation set. Every malicious class must
/// be routable: natively (own cell or shared class) or through the
/// exploratory routes handed in.
pub fn evaluate_context(
    ensemble: &DetectorEnsemble,
    eval: &EvalSet,
    exploratory: Option<&ExploratoryRoutes>,
) -> Result<EvaluationReport, EvalError> {
    if eval.benign.is_empty() && eval.cells.is_empty() {
        return Err(EvalError::EmptyEvalSet);
    }
    let reserved = exploratory.map(|r| &r.reserved);
    let benign_refs: Vec<&crate::isolate::CorpusSample> = eval
        .benign
        .iter()
        .filter(|s| reserved.is_none_or(|r| !r.contains(&s.id)))
        .collect();

    let mut entries = Vec::with_capacity(eval.cells.len());
    for cell in &eval.cells {
        let exact = DetectorId {
            network: cell.network,
            class: cell.class,
        };
        let (detector_id, route) = if ensemble.detector(exact).is_some() {
            (exact, RouteKind::OwnCell)
        } else if let Some(id) = ensemble.routing.get(&cell.class) {
            (*id, RouteKind::SharedClass)
        } else if let Some(id) =
            exploratory.and_then(|r| r.by_cell.get(&(cell.network, cell.class)))
        {
            (*id, RouteKind::Exploratory)
        } else {
            return Err(EvalError::Unroutable {
                network: cell.network,
                class_name: cell.class_name.clone(),
            });
        };
        let detector = ensemble
            .detector(detector_id)
            .ok_or(EvalError::MissingDetector(detector_id))?;

        let malicious_refs: Vec<&crate::isolate::CorpusSample> = cell
            .samples
            .iter()
            .filter(|s| reserved.is_none_or(|r| !r.contains(&s.id)))
            .collect();

        let mut predictions = predict_all(detector, &malicious_refs)?;
        predictions.extend(predict_all(detector, &benign_refs)?);
        let truth: Vec<bool> = malicious_refs
            .iter()
            .map(|_| true)
            .chain(benign_refs.iter().map(|_| false))
            .collect();
        let cm = confusion(&predictions, &truth)?;

        entries.push(EvalEntry {
            eval_network: cell.network,
            class: cell.class,
            class_name: cell.class_name.clone(),
            family: cell.family,
            detector: detector_id,
            route,
            confusion: cm,
            f1: f1(&cm),
            fpr: fpr(&cm),
            malicious_evaluated: malicious_refs.len() as u64,
        });
    }

    let per_family = family_means(&entries);
    let avg_fpr = mean(entries.iter().filter_map(|e| e.fpr));

    let union_alarm_fpr = if benign_refs.is_empty() {
        None
    } else {
        let mut alarms = 0u64;
        for sample in &benign_refs {
            for det in &ensemble.detectors {
                if det.predict(&sample.features)?.malicious {
                    alarms += 1;
                    break;
                }
            }
        }
        Some(alarms as f64 / benign_refs.len() as f64)
    };

    Ok(EvaluationReport {
        context: None,
        entries,
        per_family,
        avg_fpr,
        union_alarm_fpr,
        benign_evaluated: benign_refs.len() as u64,
        failures: Vec::new(),
        caveat: None,
    })
}

fn family_means(entries: &[EvalEntry]) -> BTreeMap<AttackFamily, f64> {
    let mut sums: BTreeMap<AttackFamily, (f64, usize)> = BTreeMap::new();
    for e in entries {
        if let Some(score) = e.f1 {
            let slot = sums.entry(e.family).or_insert((0.0, 0));
            slot.0 += score;
            slot.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(fam, (sum, n))| (fam, sum / n as f64))
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let collected: Vec<f64> = values.collect();
    if collected.is_empty() {
        None
    } else {
        Some(collected.iter().sum::<f64>() / collected.len() as f64)
    }
}

/// Mean with retained extremes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanMinMax {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

fn aggregate(values: &[f64]) -> Option<MeanMinMax> {
    if values.is_empty() {
        return None;
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    Some(MeanMinMax {
        mean: sum / values.len() as f64,
        min,
        max,
    })
}

/// Averaged view over repetitions of structurally identical reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedReport {
    pub repetitions: usize,
    pub entries: Vec<AveragedEntry>,
    pub per_family: BTreeMap<AttackFamily, f64>,
    pub avg_fpr: Option<MeanMinMax>,
    pub union_alarm_fpr: Option<MeanMinMax>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedEntry {
    pub eval_network: NetworkId,
    pub class: usize,
    pub class_name: String,
    pub family: AttackFamily,
    pub f1: Option<MeanMinMax>,
    pub fpr: Option<MeanMinMax>,
}

/// Arithmetic mean (plus min/max) over repetitions. Reports must evaluate
/// the same cells in the same order.
pub fn repeat_and_average(reports: &[EvaluationReport]) -> Result<AveragedReport, EvalError> {
    let first = reports.first().ok_or(EvalError::NoReports)?;
    let shape: Vec<(NetworkId, usize)> = first
        .entries
        .iter()
        .map(|e| (e.eval_network, e.class))
        .collect();
    for (i, report) in reports.iter().enumerate() {
        let this: Vec<(NetworkId, usize)> = report
            .entries
            .iter()
            .map(|e| (e.eval_network, e.class))
            .collect();
        if this != shape {
            return Err(EvalError::StructuralMismatch(format!(
                "report {i} evaluates different cells than report 0"
            )));
        }
    }

    let entries = shape
        .iter()
        .enumerate()
        .map(|(idx, (network, class))| {
            let f1s: Vec<f64> = reports.iter().filter_map(|r| r.entries[idx].f1).collect();
            let fprs: Vec<f64> = reports.iter().filter_map(|r| r.entries[idx].fpr).collect();
            AveragedEntry {
                eval_network: *network,
                class: *class,
                class_name: first.entries[idx].class_name.clone(),
                family: first.entries[idx].family,
                f1: aggregate(&f1s),
                fpr: aggregate(&fprs),
            }
        })
        .collect();

    let mut per_family = BTreeMap::new();
    let families: BTreeSet<AttackFamily> = reports
        .iter()
        .flat_map(|r| r.per_family.keys().copied())
        .collect();
    for family in families {
        let values: Vec<f64> = reports
            .iter()
            .filter_map(|r| r.per_family.get(&family).copied())
            .collect();
        if let Some(agg) = aggregate(&values) {
            per_family.insert(family, agg.mean);
        }
    }

    let avg_fprs: Vec<f64> = reports.iter().filter_map(|r| r.avg_fpr).collect();
    let unions: Vec<f64> = reports.iter().filter_map(|r| r.union_alarm_fpr).collect();

    Ok(AveragedReport {
        repetitions: reports.len(),
        entries,
        per_family,
        avg_fpr: aggregate(&avg_fprs),
        union_alarm_fpr: aggregate(&unions),
    })
}
