//! Cross-network evaluation toolkit for flow-based intrusion detectors.
//!
//! The pipeline has four stages. `standardize` brings heterogeneous
//! labelled flow datasets into one 12-feature schema, stripping
//! network-specific artifacts. `isolate` partitions each dataset into its
//! benign pool and per-attack-class malicious sets, forming a
//! network-by-class grid. `context` composes training and evaluation sets
//! from those pools according to declarative context tuples and classifies
//! each tuple into one of the ten context types. `detect` and `evaluate`
//! train per-attack random-forest detectors, assemble them into ensembles
//! and measure F1 / false-positive rates across the four canned workflows
//! (baseline, generalization, extension, surrogation).
//!
//! `synth` generates ground-truth-known corpora from communication
//! templates plus per-network environment profiles, so every stage can be
//! exercised end-to-end without external data.

pub mod context;
pub mod detect;
pub mod evaluate;
pub mod flow;
pub mod io;
pub mod isolate;
pub mod seed;
pub mod standardize;
pub mod synth;
#[cfg(test)]
pub(crate) mod testutil;
pub mod workflow;

pub use context::{
    build_collections, classify_context, compose, Collections, ContextCode, ContextSpec,
    ContextType, SetRelation, Split, TrainEvalPair,
};
pub use detect::{
    feature_importance_report, predict, read_detector, select_detector_exploratory,
    train_ensemble, train_forest, write_detector, Detector, DetectorEnsemble, DetectorFailure,
    DetectorId, ForestHyperparams, ImportanceReport, MaxFeatures, Prediction, RandomForest,
};
pub use evaluate::{
    confusion, evaluate_context, f1, fpr, repeat_and_average, AveragedReport, ConfusionMatrix,
    EvalError, EvaluationReport, ExploratoryRoutes,
};
pub use flow::{
    feature_schema, validate_record, AttackFamily, DatasetDescriptor, Direction, DurationUnit,
    FeatureDescriptor, FeatureKind, FlowRecord, Label, NetworkId, PortCategory, Protocol, RawFlow,
    StandardSample, ValidationResult, Violation, FEATURE_COUNT,
};
pub use isolate::{
    isolate, BenignSet, CorpusSample, GranularityMap, Isolation, MaliciousMatrix, SampleId,
};
pub use standardize::{
    classify_endpoint, classify_port, normalize_duration, split_flow, standardize_dataset,
    DurationPolicy, DurationPolicyMode, NetProfileConfig, StandardizeCounters,
    StandardizedDataset,
};
pub use synth::{generate_corpus, generate_network, CommTemplate, ConfProfile, CorpusSpec,
    NetIdProfile, TemplateKind,
};
pub use workflow::{
    exploratory_routes, run_workflow, ExploratoryConfig, WorkflowKind, WorkflowPlan,
    WorkflowReport,
};
