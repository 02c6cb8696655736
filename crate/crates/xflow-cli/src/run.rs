//! The `run` command: ingest, standardize, isolate, contextualize,
//! cross-evaluate, report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use xflow_core::context::{build_collections, TrainSet};
use xflow_core::detect::{train_ensemble, write_detector, DetectorEnsemble};
use xflow_core::evaluate::evaluate_context;
use xflow_core::io;
use xflow_core::isolate::{isolate, Isolation};
use xflow_core::standardize::{standardize_dataset, StandardizedDataset};
use xflow_core::workflow::{exploratory_routes, run_workflow, WorkflowKind};

use crate::config::{ConfigError, RunConfig};
use crate::report::{
    tables_csv, ContextResult, DatasetStage, IsolateStage, RunReport, RunResults, RunStatus,
    StageReport, REPORT_SCHEMA_VERSION,
};
use crate::CliError;

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct RunOverrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub repetitions: Option<u32>,
    pub workflow: Option<WorkflowKind>,
    /// Omit wall-clock fields so two identical runs serialize identically.
    pub stable_report: bool,
}

pub fn cmd_run(config_path: &Path, overrides: &RunOverrides) -> Result<i32, CliError> {
    let mut config = RunConfig::load(config_path).map_err(CliError::Config)?;
    if let Some(out) = &overrides.out_dir {
        config.out_dir = out.clone();
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(kind) = overrides.workflow {
        match &mut config.workflow {
            Some(workflow) => workflow.kind = kind,
            None => {
                return Err(CliError::Config(
                    ConfigError::WorkflowOverrideInContextsMode,
                ))
            }
        }
    }
    if let Some(reps) = overrides.repetitions {
        if let Some(workflow) = &mut config.workflow {
            workflow.repetitions = Some(reps);
        }
    }

    let out_dir = config.out_dir.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Pipeline(e.to_string()))?;

    let mut timing: BTreeMap<String, u64> = BTreeMap::new();
    let mut errors: Vec<String> = Vec::new();

    // Standardize every dataset; they are independent, one worker each.
    let t0 = Instant::now();
    let standardized: Vec<Result<StandardizedDataset, String>> = config
        .datasets
        .par_iter()
        .map(|dataset| {
            let raws = io::read_raw_flows_path(&dataset.path)
                .map_err(|e| format!("{}: {e}", dataset.path.display()))?;
            standardize_dataset(&raws, &dataset.profile())
                .map_err(|e| format!("{}: {e}", dataset.path.display()))
        })
        .collect();
    let mut datasets = Vec::with_capacity(standardized.len());
    for result in standardized {
        match result {
            Ok(ds) => datasets.push(ds),
            Err(e) => errors.push(format!("standardize: {e}")),
        }
    }
    timing.insert("standardize".into(), t0.elapsed().as_millis() as u64);
    log::info!(
        "standardize: {} datasets in {} ms",
        datasets.len(),
        timing["standardize"]
    );

    let standardized_dir = out_dir.join("standardized");
    std::fs::create_dir_all(&standardized_dir).map_err(|e| CliError::Pipeline(e.to_string()))?;
    for ds in &datasets {
        let path = standardized_dir.join(format!("{}.csv", ds.descriptor.name));
        if let Err(e) = io::write_standard_samples_path(&path, &ds.samples) {
            errors.push(format!("write {}: {e}", path.display()));
        }
    }

    let stages_standardize: Vec<DatasetStage> = datasets
        .iter()
        .map(|ds| DatasetStage {
            name: ds.descriptor.name.clone(),
            network_id: ds.descriptor.network_id,
            counters: ds.counters,
        })
        .collect();

    // Isolate.
    let t1 = Instant::now();
    let isolation = match isolate(&datasets, &config.granularity) {
        Ok(iso) => iso,
        Err(e) => {
            // Without a corpus nothing downstream can run; report and bail.
            errors.push(format!("isolate: {e}"));
            let report = RunReport {
                schema_version: REPORT_SCHEMA_VERSION.to_string(),
                generated_at: stamp(overrides.stable_report),
                resolved_config: config.clone(),
                stages: StageReport {
                    standardize: stages_standardize,
                    isolate: IsolateStage {
                        networks: vec![],
                        classes: vec![],
                        benign_total: 0,
                        malicious_total: 0,
                        dropped_cells: vec![],
                    },
                },
                results: RunResults::default(),
                status: RunStatus { ok: false, errors },
                timing_ms: none_if_stable(overrides.stable_report, timing),
            };
            write_report(&out_dir, &report)?;
            return Ok(1);
        }
    };
    timing.insert("isolate".into(), t1.elapsed().as_millis() as u64);
    log::info!(
        "isolate: {} benign / {} malicious samples, {} classes, in {} ms",
        isolation.benign.total_samples(),
        isolation.malicious.total_samples(),
        isolation.malicious.class_count(),
        timing["isolate"]
    );

    std::fs::write(
        out_dir.join("occupancy.csv"),
        isolation.malicious.occupancy_csv(),
    )
    .map_err(|e| CliError::Pipeline(e.to_string()))?;

    let isolate_stage = IsolateStage {
        networks: isolation.malicious.networks().to_vec(),
        classes: isolation.malicious.class_index().to_vec(),
        benign_total: isolation.benign.total_samples(),
        malicious_total: isolation.malicious.total_samples(),
        dropped_cells: isolation.dropped_cells.clone(),
    };

    // Cross-evaluate.
    let t2 = Instant::now();
    let results = if config.workflow.is_some() {
        run_workflow_mode(&config, &isolation, &out_dir, &mut errors)
    } else {
        run_contexts_mode(&config, &isolation, &out_dir, &mut errors)
    };
    timing.insert("cross_evaluate".into(), t2.elapsed().as_millis() as u64);
    log::info!("cross-evaluate: {} ms", timing["cross_evaluate"]);

    let ok = errors.is_empty();
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION.to_string(),
        generated_at: stamp(overrides.stable_report),
        resolved_config: config,
        stages: StageReport {
            standardize: stages_standardize,
            isolate: isolate_stage,
        },
        results,
        status: RunStatus { ok, errors },
        timing_ms: none_if_stable(overrides.stable_report, timing),
    };
    write_report(&out_dir, &report)?;
    Ok(if ok { 0 } else { 1 })
}

fn stamp(stable: bool) -> Option<u64> {
    if stable {
        None
    } else {
        Some(
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        )
    }
}

fn none_if_stable(
    stable: bool,
    timing: BTreeMap<String, u64>,
) -> Option<BTreeMap<String, u64>> {
    if stable {
        None
    } else {
        Some(timing)
    }
}

fn write_report(out_dir: &Path, report: &RunReport) -> Result<(), CliError> {
    let bytes = report
        .to_json_bytes()
        .map_err(|e| CliError::Pipeline(e.to_string()))?;
    std::fs::write(out_dir.join("report.json"), bytes)
        .map_err(|e| CliError::Pipeline(e.to_string()))?;
    std::fs::write(out_dir.join("tables.csv"), tables_csv(&report.results))
        .map_err(|e| CliError::Pipeline(e.to_string()))?;
    Ok(())
}

fn persist_ensemble(dir: &Path, ensemble: &DetectorEnsemble, errors: &mut Vec<String>) {
    if let Err(e) = std::fs::create_dir_all(dir) {
        errors.push(format!("models dir {}: {e}", dir.display()));
        return;
    }
    for detector in &ensemble.detectors {
        let path = dir.join(format!("{}.json", detector.id));
        if let Err(e) = write_detector(&path, detector) {
            errors.push(format!("write model {}: {e}", path.display()));
        }
    }
}

fn run_workflow_mode(
    config: &RunConfig,
    isolation: &Isolation,
    out_dir: &Path,
    errors: &mut Vec<String>,
) -> RunResults {
    let workflow = config.workflow.as_ref().expect("workflow mode");
    let plan = workflow.plan(&config.detector, config.seed);
    match run_workflow(&plan, &isolation.benign, &isolation.malicious) {
        Ok((report, ensemble)) => {
            for run in &report.runs {
                for failure in &run.failures {
                    errors.push(format!(
                        "workflow {}: detector {} failed: {}",
                        plan.kind.as_str(),
                        failure.id,
                        failure.error
                    ));
                }
            }
            persist_ensemble(
                &out_dir.join("models").join(plan.kind.as_str()),
                &ensemble,
                errors,
            );
            RunResults {
                workflow: Some(report),
                contexts: None,
            }
        }
        Err(e) => {
            errors.push(format!("workflow {}: {e}", plan.kind.as_str()));
            RunResults::default()
        }
    }
}

fn run_contexts_mode(
    config: &RunConfig,
    isolation: &Isolation,
    out_dir: &Path,
    errors: &mut Vec<String>,
) -> RunResults {
    let contexts = config.contexts.as_ref().expect("contexts mode");

    // Resolve class references; failures keep their slot in the results.
    let resolved: Vec<Result<xflow_core::context::ContextSpec, String>> = contexts
        .iter()
        .map(|ctx| {
            ctx.resolve(&isolation.malicious, config.seed)
                .map_err(|e| e.to_string())
        })
        .collect();
    let specs: Vec<xflow_core::context::ContextSpec> =
        resolved.iter().filter_map(|r| r.clone().ok()).collect();
    let collections = build_collections(&isolation.benign, &isolation.malicious, &specs);

    // Train each distinct training set once, on demand.
    let mut ensembles: BTreeMap<usize, DetectorEnsemble> = BTreeMap::new();
    let exploratory_cfg = config.detector.exploratory_config();
    let mut outcomes = collections.outcomes.iter();
    let mut results: Vec<ContextResult> = Vec::with_capacity(contexts.len());

    for (config_idx, (ctx, resolution)) in contexts.iter().zip(&resolved).enumerate() {
        if let Err(e) = resolution {
            errors.push(format!("context {config_idx}: {e}"));
            results.push(ContextResult {
                spec: ctx.clone(),
                context_type: None,
                status: e.clone(),
                report: None,
            });
            continue;
        }
        let outcome = outcomes.next().expect("one outcome per resolved spec");
        let context_type = outcome.context_type;
        match &outcome.indices {
            Ok((t_idx, e_idx)) => {
                let train: &TrainSet = &collections.trains[*t_idx];
                if !ensembles.contains_key(t_idx) {
                    let (ensemble, failures) =
                        train_ensemble(train, &config.detector.hyperparams(), outcome.spec.seed);
                    for failure in &failures {
                        errors.push(format!(
                            "context {config_idx}: detector {} failed: {}",
                            failure.id, failure.error
                        ));
                    }
                    persist_ensemble(
                        &out_dir.join("models").join(format!("train{t_idx}")),
                        &ensemble,
                        errors,
                    );
                    ensembles.insert(*t_idx, ensemble);
                }
                let ensemble = &ensembles[t_idx];
                let eval = &collections.evals[*e_idx];
                let evaluated = exploratory_routes(
                    ensemble,
                    eval,
                    outcome.spec.split_malicious,
                    &isolation.malicious,
                    &exploratory_cfg,
                    outcome.spec.seed,
                )
                .and_then(|routes| evaluate_context(ensemble, eval, Some(&routes)));
                match evaluated {
                    Ok(report) => results.push(ContextResult {
                        spec: ctx.clone(),
                        context_type,
                        status: "ok".into(),
                        report: Some(report),
                    }),
                    Err(e) => {
                        errors.push(format!("context {config_idx}: {e}"));
                        results.push(ContextResult {
                            spec: ctx.clone(),
                            context_type,
                            status: e.to_string(),
                            report: None,
                        });
                    }
                }
            }
            Err(e) => {
                errors.push(format!("context {config_idx}: {e}"));
                results.push(ContextResult {
                    spec: ctx.clone(),
                    context_type,
                    status: e.clone(),
                    report: None,
                });
            }
        }
    }

    RunResults {
        workflow: None,
        contexts: Some(results),
    }
}
