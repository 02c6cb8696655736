//! The four canned cross-evaluation workflows.
//!
//! Baseline trains one detector per attack class of the origin network and
//! scores them on the origin's own eval partitions. Generalization reuses
//! those exact models against every network's classes, picking a detector
//! for unknown classes by exploratory selection. Extension adds one
//! detector per foreign cell (origin benign + that cell) and evaluates
//! everything. Surrogation keeps only the foreign-trained detectors and
//! evaluates only foreign cells.
//!
//! Cell partitions and per-detector seeds derive from (repetition seed,
//! cell coordinates) alone, so models and eval partitions shared between
//! workflows coincide exactly: generalization's ensemble serializes
//! byte-identically to baseline's.

use serde::{Deserialize, Serialize};

use crate::context::{
    classify_context, compose, partition_cell, ContextSpec, Split, TrainEvalPair,
};
use crate::detect::{
    select_detector_exploratory, train_ensemble, DetectorEnsemble, ForestHyperparams,
};
use crate::evaluate::{
    evaluate_context, repeat_and_average, AveragedReport, ContextSummary, EvalError,
    EvaluationReport, ExploratoryRoutes,
};
use crate::flow::NetworkId;
use crate::isolate::{BenignSet, MaliciousMatrix};
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkflowKind {
    Baseline,
    Generalization,
    Extension,
    Surrogation,
}

impl WorkflowKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            WorkflowKind::Baseline => "baseline",
            WorkflowKind::Generalization => "generalization",
            WorkflowKind::Extension => "extension",
            WorkflowKind::Surrogation => "surrogation",
        }
    }
}

/// Exploratory-selection knobs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploratoryConfig {
    pub enabled: bool,
    /// Fraction of the unknown cell reserved for probing.
    pub reserve_frac: f64,
    /// Fraction of the eval benign partition used as the benign probe.
    pub benign_probe_frac: f64,
}

impl Default for ExploratoryConfig {
    fn default() -> Self {
        ExploratoryConfig {
            enabled: true,
            reserve_frac: 0.1,
            benign_probe_frac: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkflowPlan {
    pub kind: WorkflowKind,
    pub origin: NetworkId,
    #[serde(default)]
    pub hyperparams: ForestHyperparams,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    pub seed: u64,
    #[serde(default)]
    pub split_benign: Split,
    #[serde(default)]
    pub split_malicious: Split,
    #[serde(default)]
    pub exploratory: ExploratoryConfig,
}

fn default_repetitions() -> u32 {
    5
}

/// Full outcome of one workflow: per-repetition reports plus the averaged
/// summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkflowReport {
    pub kind: WorkflowKind,
    pub origin: NetworkId,
    pub repetitions: u32,
    pub runs: Vec<EvaluationReport>,
    pub summary: AveragedReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caveat: Option<String>,
}

const SURROGATION_CAVEAT: &str = "surrogate detectors never saw malicious traffic from the \
origin network; unusually high scores can indicate overfitting to residual environment \
artifacts left by standardization and should be investigated before any deployment";

fn cells_to_arrays(cells: &[(NetworkId, usize)]) -> (Vec<NetworkId>, Vec<usize>) {
    (
        cells.iter().map(|(n, _)| *n).collect(),
        cells.iter().map(|(_, c)| *c).collect(),
    )
}

fn compose_repetition(
    plan: &WorkflowPlan,
    benign: &BenignSet,
    matrix: &MaliciousMatrix,
    rep_seed: u64,
) -> Result<TrainEvalPair, EvalError> {
    let origin = plan.origin;
    let all = matrix.non_empty_cells();
    let own: Vec<(NetworkId, usize)> = all.iter().copied().filter(|(n, _)| *n == origin).collect();
    let foreign: Vec<(NetworkId, usize)> =
        all.iter().copied().filter(|(n, _)| *n != origin).collect();

    let (train_cells, eval_cells) = match plan.kind {
        WorkflowKind::Baseline => (own.clone(), own.clone()),
        WorkflowKind::Generalization => (own.clone(), all.clone()),
        WorkflowKind::Extension => (all.clone(), all.clone()),
        WorkflowKind::Surrogation => (foreign.clone(), foreign.clone()),
    };

    let (train_networks, train_classes) = cells_to_arrays(&train_cells);
    let (eval_networks, eval_classes) = cells_to_arrays(&eval_cells);
    let spec = ContextSpec {
        origin,
        train_networks,
        train_classes,
        eval_networks,
        eval_classes,
        split_benign: plan.split_benign,
        split_malicious: plan.split_malicious,
        seed: rep_seed,
    };
    Ok(compose(benign, matrix, &spec)?)
}

/// Computes exploratory routes for every eval cell the ensemble cannot
/// route natively.
///
/// The reserve pool for an unknown cell is its train-split partition: the
/// requesting context never trains on it, and keeping the probe out of the
/// eval partition leaves the evaluated set identical to the one an
/// extension workflow sees. Errors if a class is unroutable while
/// exploratory selection is disabled.
pub fn exploratory_routes(
    ensemble: &DetectorEnsemble,
    eval: &crate::context::EvalSet,
    split_malicious: Split,
    matrix: &MaliciousMatrix,
    cfg: &ExploratoryConfig,
    seed: u64,
) -> Result<ExploratoryRoutes, EvalError> {
    let mut routes = ExploratoryRoutes::default();
    for cell in &eval.cells {
        if ensemble.route(cell.network, cell.class).is_some() {
            continue;
        }
        if !cfg.enabled {
            return Err(EvalError::Unroutable {
                network: cell.network,
                class_name: cell.class_name.clone(),
            });
        }
        let full_cell = matrix
            .cell(cell.network, cell.class)
            .expect("eval cells come from the matrix");
        let (reserve_pool, _) =
            partition_cell(full_cell, split_malicious, seed, cell.network, cell.class);
        let selection = select_detector_exploratory(
            ensemble,
            &reserve_pool,
            &eval.benign,
            cfg.reserve_frac,
            cfg.benign_probe_frac,
            derive_seed(
                seed,
                "exploratory",
                ((cell.network.0 as u64) << 32) | cell.class as u64,
            ),
        )?;
        routes
            .by_cell
            .insert((cell.network, cell.class), selection.detector);
        routes.reserved.extend(selection.reserved);
    }
    Ok(routes)
}

fn run_repetition(
    plan: &WorkflowPlan,
    benign: &BenignSet,
    matrix: &MaliciousMatrix,
    rep: u32,
) -> Result<(EvaluationReport, DetectorEnsemble), EvalError> {
    let rep_seed = derive_seed(plan.seed, "repetition", rep as u64);
    let pair = compose_repetition(plan, benign, matrix, rep_seed)?;
    let (ensemble, failures) = train_ensemble(&pair.train, &plan.hyperparams, rep_seed);
    let routes = exploratory_routes(
        &ensemble,
        &pair.eval,
        plan.split_malicious,
        matrix,
        &plan.exploratory,
        rep_seed,
    )?;
    let mut report = evaluate_context(&ensemble, &pair.eval, Some(&routes))?;
    report.context = Some(ContextSummary {
        code: pair.context_type.code,
        relations: pair.context_type.relations,
        origin: plan.origin,
        train_key: pair.train.key.to_string(),
        eval_key: pair.eval.key.to_string(),
        seed: rep_seed,
    });
    report.failures = failures;
    if plan.kind == WorkflowKind::Surrogation {
        report.caveat = Some(SURROGATION_CAVEAT.to_string());
    }
    Ok((report, ensemble))
}

/// Runs a workflow for `plan.repetitions` derived seeds and averages the
/// reports. Also returns the first repetition's ensemble for persistence
/// and diagnostics.
pub fn run_workflow(
    plan: &WorkflowPlan,
    benign: &BenignSet,
    matrix: &MaliciousMatrix,
) -> Result<(WorkflowReport, DetectorEnsemble), EvalError> {
    if plan.repetitions == 0 {
        return Err(EvalError::NoReports);
    }
    let mut runs = Vec::with_capacity(plan.repetitions as usize);
    let mut first_ensemble = None;
    for rep in 0..plan.repetitions {
        let (report, ensemble) = run_repetition(plan, benign, matrix, rep)?;
        if first_ensemble.is_none() {
            first_ensemble = Some(ensemble);
        }
        runs.push(report);
    }
    let summary = repeat_and_average(&runs)?;
    let caveat = runs.first().and_then(|r| r.caveat.clone());
    Ok((
        WorkflowReport {
            kind: plan.kind,
            origin: plan.origin,
            repetitions: plan.repetitions,
            runs,
            summary,
            caveat,
        },
        first_ensemble.expect("at least one repetition"),
    ))
}

/// Classifies the context a workflow kind induces on a corpus, for
/// reporting. Returns `None` when the corpus leaves a side empty.
pub fn workflow_context_code(
    plan: &WorkflowPlan,
    matrix: &MaliciousMatrix,
) -> Option<crate::context::ContextCode> {
    compose_repetition_spec(plan, matrix).and_then(|spec| classify_context(&spec).ok().map(|t| t.code))
}

fn compose_repetition_spec(plan: &WorkflowPlan, matrix: &MaliciousMatrix) -> Option<ContextSpec> {
    let all = matrix.non_empty_cells();
    let own: Vec<(NetworkId, usize)> = all
        .iter()
        .copied()
        .filter(|(n, _)| *n == plan.origin)
        .collect();
    let foreign: Vec<(NetworkId, usize)> = all
        .iter()
        .copied()
        .filter(|(n, _)| *n != plan.origin)
        .collect();
    let (train_cells, eval_cells) = match plan.kind {
        WorkflowKind::Baseline => (own.clone(), own),
        WorkflowKind::Generalization => (own, all),
        WorkflowKind::Extension => (all.clone(), all),
        WorkflowKind::Surrogation => (foreign.clone(), foreign),
    };
    if train_cells.is_empty() || eval_cells.is_empty() {
        return None;
    }
    let (train_networks, train_classes) = cells_to_arrays(&train_cells);
    let (eval_networks, eval_classes) = cells_to_arrays(&eval_cells);
    Some(ContextSpec {
        origin: plan.origin,
        train_networks,
        train_classes,
        eval_networks,
        eval_classes,
        split_benign: plan.split_benign,
        split_malicious: plan.split_malicious,
        seed: plan.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::ContextCode;
    use crate::flow::{AttackFamily, Label, NetworkId};
    use crate::isolate::{isolate, GranularityMap};
    use crate::seed::rng_from_seed;
    use crate::testutil;
    use rand::Rng;

    /// Four networks; each network's classes are unique to it and each
    /// class separates from benign along its own feature dimension.
    pub(crate) fn corpus(
        class_layout: &[(u32, &[&str])],
        benign_per_net: usize,
        per_class: usize,
    ) -> crate::isolate::Isolation {
        let mut datasets = Vec::new();
        for (net, classes) in class_layout {
            let mut ds = testutil::dataset(*net, 0, &[]);
            let mut rng = rng_from_seed(1000 + *net as u64);
            for _ in 0..benign_per_net {
                let mut s = testutil::sample(NetworkId(*net), Label::Benign);
                s.tot_bytes = rng.gen_range(100..1000);
                s.in_bytes = s.tot_bytes / 2;
                s.out_bytes = s.tot_bytes - s.in_bytes;
                s.tot_packets = rng.gen_range(1..30);
                s.in_packets = s.tot_packets / 2;
                s.out_packets = s.tot_packets - s.in_packets;
                s.duration_s = rng.gen_range(0.1..30.0);
                ds.samples.push(s);
            }
            for (k, class) in classes.iter().enumerate() {
                for _ in 0..per_class {
                    let mut s = testutil::sample(
                        NetworkId(*net),
                        Label::malicious(*class, AttackFamily::Other),
                    );
                    s.tot_bytes = rng.gen_range(100..1000);
                    s.in_bytes = s.tot_bytes / 2;
                    s.out_bytes = s.tot_bytes - s.in_bytes;
                    s.tot_packets = rng.gen_range(1..30);
                    s.duration_s = rng.gen_range(0.1..30.0);
                    // Plant the signal on a distinct dimension per class.
                    match k % 3 {
                        0 => {
                            s.tot_bytes = rng.gen_range(50_000..90_000);
                            s.in_bytes = s.tot_bytes / 2;
                            s.out_bytes = s.tot_bytes - s.in_bytes;
                        }
                        1 => {
                            s.tot_packets = rng.gen_range(2_000..5_000);
                            s.in_packets = s.tot_packets / 2;
                            s.out_packets = s.tot_packets - s.in_packets;
                        }
                        _ => s.duration_s = rng.gen_range(400.0..900.0),
                    }
                    ds.samples.push(s);
                }
            }
            datasets.push(ds);
        }
        isolate(&datasets, &GranularityMap::default()).unwrap()
    }

    fn plan(kind: WorkflowKind, origin: u32, reps: u32) -> WorkflowPlan {
        WorkflowPlan {
            kind,
            origin: NetworkId(origin),
            hyperparams: ForestHyperparams {
                n_trees: 10,
                ..Default::default()
            },
            repetitions: reps,
            seed: 77,
            split_benign: Split::DEFAULT,
            split_malicious: Split::DEFAULT,
            exploratory: ExploratoryConfig::default(),
        }
    }

    fn small_corpus() -> crate::isolate::Isolation {
        corpus(
            &[
                (1, &["a1", "a2"]),
                (2, &["b1"]),
                (3, &["c1", "c2"]),
            ],
            200,
            60,
        )
    }

    #[test]
    fn baseline_trains_own_classes_only() {
        let iso = small_corpus();
        let (report, ensemble) =
            run_workflow(&plan(WorkflowKind::Baseline, 1, 2), &iso.benign, &iso.malicious)
                .unwrap();
        assert_eq!(ensemble.detectors.len(), 2);
        assert_eq!(report.runs[0].entries.len(), 2);
        assert_eq!(
            report.runs[0].context.as_ref().unwrap().code,
            ContextCode::C1
        );
        assert!(report
            .runs[0]
            .entries
            .iter()
            .all(|e| e.route == crate::evaluate::RouteKind::OwnCell));
    }

    #[test]
    fn generalization_covers_all_networks_without_retraining() {
        let iso = small_corpus();
        let (report, ensemble) = run_workflow(
            &plan(WorkflowKind::Generalization, 1, 1),
            &iso.benign,
            &iso.malicious,
        )
        .unwrap();
        assert_eq!(ensemble.detectors.len(), 2);
        assert_eq!(report.runs[0].entries.len(), 5);
        assert_eq!(
            report.runs[0].context.as_ref().unwrap().code,
            ContextCode::C4
        );
        let foreign_entries: Vec<_> = report.runs[0]
            .entries
            .iter()
            .filter(|e| e.eval_network != NetworkId(1))
            .collect();
        assert!(foreign_entries
            .iter()
            .all(|e| e.route == crate::evaluate::RouteKind::Exploratory));
    }

    #[test]
    fn extension_and_surrogation_detector_counts() {
        let iso = small_corpus();
        let (ext, ext_ens) = run_workflow(
            &plan(WorkflowKind::Extension, 1, 1),
            &iso.benign,
            &iso.malicious,
        )
        .unwrap();
        assert_eq!(ext_ens.detectors.len(), 5);
        assert_eq!(ext.runs[0].entries.len(), 5);
        assert_eq!(ext.runs[0].context.as_ref().unwrap().code, ContextCode::C7);

        let (sur, sur_ens) = run_workflow(
            &plan(WorkflowKind::Surrogation, 1, 1),
            &iso.benign,
            &iso.malicious,
        )
        .unwrap();
        assert_eq!(sur_ens.detectors.len(), 3);
        assert_eq!(sur.runs[0].entries.len(), 3);
        assert_eq!(sur.runs[0].context.as_ref().unwrap().code, ContextCode::C7);
        assert!(sur.caveat.as_ref().unwrap().contains("overfitting"));
        assert!(sur
            .runs[0]
            .entries
            .iter()
            .all(|e| e.eval_network != NetworkId(1)));
    }

    #[test]
    fn baseline_models_match_generalization_models() {
        let iso = small_corpus();
        let (_, base_ens) =
            run_workflow(&plan(WorkflowKind::Baseline, 1, 1), &iso.benign, &iso.malicious)
                .unwrap();
        let (_, gen_ens) = run_workflow(
            &plan(WorkflowKind::Generalization, 1, 1),
            &iso.benign,
            &iso.malicious,
        )
        .unwrap();
        let a = serde_json::to_vec(&base_ens.detectors).unwrap();
        let b = serde_json::to_vec(&gen_ens.detectors).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn baseline_scores_repeat_inside_generalization() {
        let iso = small_corpus();
        let (base, _) =
            run_workflow(&plan(WorkflowKind::Baseline, 1, 2), &iso.benign, &iso.malicious)
                .unwrap();
        let (gen, _) = run_workflow(
            &plan(WorkflowKind::Generalization, 1, 2),
            &iso.benign,
            &iso.malicious,
        )
        .unwrap();
        for (rep, base_run) in base.runs.iter().enumerate() {
            for base_entry in &base_run.entries {
                let gen_entry = gen.runs[rep]
                    .entries
                    .iter()
                    .find(|e| {
                        e.eval_network == base_entry.eval_network && e.class == base_entry.class
                    })
                    .unwrap();
                assert_eq!(gen_entry.confusion, base_entry.confusion);
                assert_eq!(gen_entry.f1, base_entry.f1);
            }
        }
    }

    #[test]
    fn first_repetition_is_stable_across_repetition_counts() {
        let iso = small_corpus();
        let (one, _) =
            run_workflow(&plan(WorkflowKind::Baseline, 1, 1), &iso.benign, &iso.malicious)
                .unwrap();
        let (five, _) =
            run_workflow(&plan(WorkflowKind::Baseline, 1, 3), &iso.benign, &iso.malicious)
                .unwrap();
        assert_eq!(one.runs[0], five.runs[0]);
    }

    #[test]
    fn reserved_ids_never_evaluated() {
        let iso = small_corpus();
        let p = plan(WorkflowKind::Generalization, 1, 1);
        let rep_seed = derive_seed(p.seed, "repetition", 0);
        let pair = compose_repetition(&p, &iso.benign, &iso.malicious, rep_seed).unwrap();
        let (ensemble, _) = train_ensemble(&pair.train, &p.hyperparams, rep_seed);
        let routes = exploratory_routes(
            &ensemble,
            &pair.eval,
            p.split_malicious,
            &iso.malicious,
            &p.exploratory,
            rep_seed,
        )
        .unwrap();
        assert!(!routes.reserved.is_empty());
        // No reserved id appears in the eval set.
        let eval_ids: std::collections::BTreeSet<_> = pair
            .eval
            .benign
            .iter()
            .chain(pair.eval.cells.iter().flat_map(|c| c.samples.iter()))
            .map(|s| s.id)
            .collect();
        assert!(routes.reserved.is_disjoint(&eval_ids));
    }

    #[test]
    fn unroutable_without_exploratory_errors() {
        let iso = small_corpus();
        let mut p = plan(WorkflowKind::Generalization, 1, 1);
        p.exploratory.enabled = false;
        let err = run_workflow(&p, &iso.benign, &iso.malicious).unwrap_err();
        assert!(matches!(err, EvalError::Unroutable { .. }));
    }

    #[test]
    fn surrogation_needs_foreign_cells() {
        let iso = corpus(&[(1, &["a1"]), (2, &[])], 50, 30);
        let err = run_workflow(
            &plan(WorkflowKind::Surrogation, 1, 1),
            &iso.benign,
            &iso.malicious,
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::Context(_)));
    }
}
