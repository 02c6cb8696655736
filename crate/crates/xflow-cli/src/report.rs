//! Run-report assembly: the JSON document describing one pipeline run and
//! the flat CSV table derived from it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use xflow_core::context::ContextType;
use xflow_core::evaluate::EvaluationReport;
use xflow_core::flow::{AttackFamily, NetworkId};
use xflow_core::standardize::StandardizeCounters;
use xflow_core::workflow::WorkflowReport;

use crate::config::{ContextConfig, RunConfig};

pub const REPORT_SCHEMA_VERSION: &str = "xflow.report.v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    /// Unix seconds; omitted when the report is normalized for
    /// byte-comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
    /// The configuration after defaults and command-line overrides; running
    /// from this config reproduces the run.
    pub resolved_config: RunConfig,
    pub stages: StageReport,
    pub results: RunResults,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<BTreeMap<String, u64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub standardize: Vec<DatasetStage>,
    pub isolate: IsolateStage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStage {
    pub name: String,
    pub network_id: NetworkId,
    pub counters: StandardizeCounters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolateStage {
    pub networks: Vec<NetworkId>,
    pub classes: Vec<String>,
    pub benign_total: usize,
    pub malicious_total: usize,
    /// (network, class, samples) for cells emptied by the granularity map.
    pub dropped_cells: Vec<(NetworkId, String, usize)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workflow: Option<WorkflowReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contexts: Option<Vec<ContextResult>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextResult {
    pub spec: ContextConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_type: Option<ContextType>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvaluationReport>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub ok: bool,
    pub errors: Vec<String>,
}

impl RunReport {
    pub fn to_json_bytes(&self) -> serde_json::Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

fn family_cell(per_family: &BTreeMap<AttackFamily, f64>, family: AttackFamily) -> String {
    per_family
        .get(&family)
        .map(|v| format!("{v}"))
        .unwrap_or_default()
}

fn option_cell(value: Option<f64>) -> String {
    value.map(|v| format!("{v}")).unwrap_or_default()
}

/// Flat results table: one row per workflow or per evaluated context, with
/// per-family F1 columns and the mean per-detector FPR.
pub fn tables_csv(results: &RunResults) -> String {
    let mut out = String::from("result,origin,botnet_f1,dos_f1,other_f1,avg_fpr\n");
    if let Some(workflow) = &results.workflow {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            workflow.kind.as_str(),
            workflow.origin,
            family_cell(&workflow.summary.per_family, AttackFamily::Botnet),
            family_cell(&workflow.summary.per_family, AttackFamily::Dos),
            family_cell(&workflow.summary.per_family, AttackFamily::Other),
            option_cell(workflow.summary.avg_fpr.map(|m| m.mean)),
        ));
    }
    if let Some(contexts) = &results.contexts {
        for (i, ctx) in contexts.iter().enumerate() {
            let label = ctx
                .context_type
                .map(|t| format!("ctx{i}-{}", t.code))
                .unwrap_or_else(|| format!("ctx{i}"));
            match &ctx.report {
                Some(report) => out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    label,
                    ctx.spec.o,
                    family_cell(&report.per_family, AttackFamily::Botnet),
                    family_cell(&report.per_family, AttackFamily::Dos),
                    family_cell(&report.per_family, AttackFamily::Other),
                    option_cell(report.avg_fpr),
                )),
                None => out.push_str(&format!("{},{},,,,\n", label, ctx.spec.o)),
            }
        }
    }
    out
}
