//! Integration tests for the command surface: exit codes, artifact layout,
//! contexts mode, and config round-tripping.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use xflow_cli::run::{cmd_run, RunOverrides};
use xflow_cli::synth_cmd::cmd_synth;
use xflow_cli::{cmd_importance, CliError, RunReport};
use xflow_core::flow::{DurationUnit, NetworkId};
use xflow_core::synth::{
    CommTemplate, ConfProfile, CorpusSpec, DirectionConvention, NetIdProfile, NetworkSpec,
    TemplateKind,
};
use xflow_core::workflow::WorkflowKind;

fn template(kind: TemplateKind) -> CommTemplate {
    CommTemplate {
        kind,
        family: None,
        detectability: 1.0,
        payload_median_bytes: None,
        payload_sigma: None,
        service: None,
        inbound_fraction: None,
    }
}

fn small_spec(seed: u64) -> CorpusSpec {
    let mut templates = BTreeMap::new();
    templates.insert("web".to_string(), template(TemplateKind::BenignWeb));
    templates.insert(
        "exfil".to_string(),
        CommTemplate {
            payload_median_bytes: Some(5e7),
            payload_sigma: Some(0.2),
            ..template(TemplateKind::DosFlood)
        },
    );
    templates.insert("beacon_x".to_string(), template(TemplateKind::BotnetBeacon));
    let network = |id: u32, name: &str, subnet: &str, flows: &[(&str, usize)]| NetworkSpec {
        network_id: NetworkId(id),
        name: name.to_string(),
        netid: NetIdProfile {
            bandwidth_mbps: 100.0,
            internal_subnets: vec![subnet.parse().unwrap()],
            service_ports: BTreeMap::new(),
            benign_rate_per_hour: 3600.0,
        },
        conf: ConfProfile {
            d_max_s: 150.0,
            duration_unit: DurationUnit::Seconds,
            direction_convention: DirectionConvention::InOut,
        },
        flows: flows.iter().map(|(n, c)| (n.to_string(), *c)).collect(),
    };
    CorpusSpec {
        seed,
        templates,
        networks: vec![
            network(1, "alpha", "10.1.0.0/16", &[("web", 300), ("exfil", 120)]),
            network(2, "beta", "192.168.0.0/16", &[("web", 300), ("beacon_x", 120)]),
        ],
    }
}

fn write_corpus(dir: &Path, seed: u64) -> PathBuf {
    let manifest_path = dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&small_spec(seed)).unwrap(),
    )
    .unwrap();
    let corpus_dir = dir.join("corpus");
    assert_eq!(cmd_synth(&manifest_path, &corpus_dir).unwrap(), 0);
    corpus_dir
}

fn dataset_json(corpus: &Path, id: u32, name: &str, subnet: &str) -> serde_json::Value {
    serde_json::json!({
        "path": corpus.join(format!("{name}.csv")).to_string_lossy(),
        "descriptor": {
            "network_id": id,
            "name": name,
            "internal_subnets": [subnet],
            "duration_unit": "seconds",
            "d_max": 150.0
        }
    })
}

fn base_config(dir: &Path, corpus: &Path) -> serde_json::Value {
    serde_json::json!({
        "seed": 7,
        "out_dir": dir.join("out").to_string_lossy(),
        "datasets": [
            dataset_json(corpus, 1, "alpha", "10.1.0.0/16"),
            dataset_json(corpus, 2, "beta", "192.168.0.0/16"),
        ],
        "detector": {"n_trees": 8}
    })
}

fn load_report(dir: &Path) -> RunReport {
    let bytes = std::fs::read(dir.join("out/report.json")).unwrap();
    serde_json::from_slice(&bytes).unwrap()
}

#[test]
fn workflow_run_produces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 11);
    let mut config = base_config(dir.path(), &corpus);
    config["workflow"] = serde_json::json!({"kind": "baseline", "origin": 1, "repetitions": 2});
    let config_path = dir.path().join("run.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let code = cmd_run(&config_path, &RunOverrides::default()).unwrap();
    assert_eq!(code, 0);
    for artifact in [
        "out/report.json",
        "out/tables.csv",
        "out/occupancy.csv",
        "out/standardized/alpha.csv",
        "out/standardized/beta.csv",
    ] {
        assert!(dir.path().join(artifact).exists(), "missing {artifact}");
    }
    let report = load_report(dir.path());
    assert!(report.status.ok);
    assert!(report.generated_at.is_some());
    assert!(report.timing_ms.is_some());
    let workflow = report.results.workflow.as_ref().unwrap();
    assert_eq!(workflow.kind, WorkflowKind::Baseline);
    assert_eq!(workflow.runs.len(), 2);
    // One model file per baseline detector.
    let models: Vec<_> = std::fs::read_dir(dir.path().join("out/models/baseline"))
        .unwrap()
        .collect();
    assert_eq!(models.len(), 1);
}

#[test]
fn contexts_mode_runs_and_reuses_training_sets() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 12);
    let mut config = base_config(dir.path(), &corpus);
    // Two contexts sharing a training definition, one failing (empty cell:
    // beta's exfil cell has no samples).
    config["contexts"] = serde_json::json!([
        {"o": 1, "t": [1], "tau": ["exfil"], "e": [1], "eps": ["exfil"]},
        {"o": 1, "t": [1], "tau": ["exfil"], "e": [2], "eps": ["beacon_x"]},
        {"o": 1, "t": [2], "tau": ["exfil"], "e": [1], "eps": ["exfil"]}
    ]);
    let config_path = dir.path().join("run.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let code = cmd_run(&config_path, &RunOverrides::default()).unwrap();
    assert_eq!(code, 1, "one failing context fails the run");
    let report = load_report(dir.path());
    let contexts = report.results.contexts.as_ref().unwrap();
    assert_eq!(contexts.len(), 3);
    assert_eq!(contexts[0].status, "ok");
    assert_eq!(contexts[1].status, "ok");
    assert!(contexts[2].status.contains("empty"));
    assert!(contexts[0].report.is_some());
    // The C1 context scores its own class; the cross-network one routed
    // exploratorily.
    let first = contexts[0].report.as_ref().unwrap();
    assert_eq!(first.entries.len(), 1);
    assert!(report.status.errors.iter().any(|e| e.contains("context 2")));
    // Shared training set: only one models/train* directory.
    let models: Vec<_> = std::fs::read_dir(dir.path().join("out/models"))
        .unwrap()
        .collect();
    assert_eq!(models.len(), 1);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 13);

    // Both modes at once.
    let mut both = base_config(dir.path(), &corpus);
    both["workflow"] = serde_json::json!({"kind": "baseline", "origin": 1});
    both["contexts"] = serde_json::json!([]);
    let path = dir.path().join("both.json");
    std::fs::write(&path, serde_json::to_string_pretty(&both).unwrap()).unwrap();
    let err = cmd_run(&path, &RunOverrides::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);

    // Neither mode.
    let neither = base_config(dir.path(), &corpus);
    let path = dir.path().join("neither.json");
    std::fs::write(&path, serde_json::to_string_pretty(&neither).unwrap()).unwrap();
    let err = cmd_run(&path, &RunOverrides::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);

    // Missing dataset file, named in the error.
    let mut missing = base_config(dir.path(), &corpus);
    missing["workflow"] = serde_json::json!({"kind": "baseline", "origin": 1});
    missing["datasets"][0]["path"] = serde_json::json!("does-not-exist.csv");
    let path = dir.path().join("missing.json");
    std::fs::write(&path, serde_json::to_string_pretty(&missing).unwrap()).unwrap();
    let err = cmd_run(&path, &RunOverrides::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("does-not-exist.csv"));

    // Workflow override on a contexts-mode config.
    let mut contexts = base_config(dir.path(), &corpus);
    contexts["contexts"] = serde_json::json!([
        {"o": 1, "t": [1], "tau": ["exfil"], "e": [1], "eps": ["exfil"]}
    ]);
    let path = dir.path().join("ctx.json");
    std::fs::write(&path, serde_json::to_string_pretty(&contexts).unwrap()).unwrap();
    let err = cmd_run(
        &path,
        &RunOverrides {
            workflow: Some(WorkflowKind::Extension),
            ..Default::default()
        },
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn synth_rejects_bad_manifests() {
    let dir = tempfile::tempdir().unwrap();

    let empty = dir.path().join("empty.json");
    std::fs::write(
        &empty,
        serde_json::to_string(&serde_json::json!({
            "seed": 1, "templates": {}, "networks": []
        }))
        .unwrap(),
    )
    .unwrap();
    let err = cmd_synth(&empty, &dir.path().join("out")).unwrap_err();
    assert!(matches!(err, CliError::Synth(_)));
    assert_eq!(err.exit_code(), 2);

    let garbled = dir.path().join("garbled.json");
    std::fs::write(&garbled, "{not json").unwrap();
    let err = cmd_synth(&garbled, &dir.path().join("out")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    std::fs::write(
        &manifest,
        serde_json::to_string_pretty(&small_spec(99)).unwrap(),
    )
    .unwrap();
    cmd_synth(&manifest, &dir.path().join("a")).unwrap();
    cmd_synth(&manifest, &dir.path().join("b")).unwrap();
    let a = std::fs::read(dir.path().join("a/alpha.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/alpha.csv")).unwrap();
    assert_eq!(a, b);
    assert!(dir.path().join("a/manifest.json").exists());
}

#[test]
fn importance_command_reads_persisted_models() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 14);
    let mut config = base_config(dir.path(), &corpus);
    config["workflow"] = serde_json::json!({"kind": "extension", "origin": 1, "repetitions": 1});
    let config_path = dir.path().join("run.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    assert_eq!(cmd_run(&config_path, &RunOverrides::default()).unwrap(), 0);

    let models_dir = dir.path().join("out/models/extension");
    let models: Vec<PathBuf> = std::fs::read_dir(&models_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(models.len(), 2);

    let out_csv = dir.path().join("importances.csv");
    assert_eq!(cmd_importance(&models, &out_csv, 6).unwrap(), 0);
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4); // header + 2 detectors + spread
    assert!(lines[0].starts_with("detector,class,"));
    assert!(lines[3].starts_with("spread,"));

    // Unreadable model file is a pipeline error (exit 1).
    let bogus = dir.path().join("bogus.json");
    std::fs::write(&bogus, "{}").unwrap();
    let err = cmd_importance(&[bogus], &out_csv, 6).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 15);
    let mut config = base_config(dir.path(), &corpus);
    config["workflow"] = serde_json::json!({"kind": "baseline", "origin": 1, "repetitions": 2});
    let config_path = dir.path().join("run.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let overrides = RunOverrides {
        stable_report: true,
        seed: Some(4242),
        ..Default::default()
    };
    assert_eq!(cmd_run(&config_path, &overrides).unwrap(), 0);
    let first = std::fs::read(dir.path().join("out/report.json")).unwrap();
    let report: RunReport = serde_json::from_slice(&first).unwrap();
    assert_eq!(report.resolved_config.seed, 4242);

    // Re-run from the embedded resolved config, no overrides beyond
    // normalization: byte-identical report.
    let extracted = dir.path().join("resolved.json");
    std::fs::write(
        &extracted,
        serde_json::to_string_pretty(&report.resolved_config).unwrap(),
    )
    .unwrap();
    let rerun = RunOverrides {
        stable_report: true,
        ..Default::default()
    };
    assert_eq!(cmd_run(&extracted, &rerun).unwrap(), 0);
    let second = std::fs::read(dir.path().join("out/report.json")).unwrap();
    assert_eq!(first, second);
}
