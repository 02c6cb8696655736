//! Stage 1: bring heterogeneous datasets into the common schema.
//!
//! Removes network-specific artifacts: raw addresses become an
//! internal/external boolean, raw ports become IANA categories, durations
//! are normalized to seconds and bounded by a configurable policy.

use std::net::IpAddr;

use ipnet::IpNet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{
    validate_record, DatasetDescriptor, DurationUnit, FlowRecord, PortCategory, Protocol, RawFlow,
    StandardSample, ValidationResult,
};

#[derive(Debug, Error)]
pub enum StandardizeError {
    #[error("port {0} outside [0, 65535]")]
    PortOutOfRange(u32),
    #[error("negative duration {0}")]
    NegativeDuration(f64),
    #[error("duration cap must be positive, got {0}")]
    NonPositiveCap(f64),
    #[error("protocol filter must be non-empty when present")]
    EmptyProtocolFilter,
}

/// How durations above the cap are handled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationPolicyMode {
    /// Drop flows longer than the cap.
    OutlierRemoval,
    /// Clamp to the cap, keeping the original value in the record's
    /// `original_duration` sidecar for derived metrics.
    ThresholdSetting,
    /// Truncate long flows into cap-sized fragments, apportioning counts.
    FlowSplitting,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationPolicy {
    pub mode: DurationPolicyMode,
    /// Cap in seconds; typically the smallest exporter maximum across the
    /// corpus, or an explicitly configured bound.
    pub d_cap: f64,
}

impl DurationPolicy {
    pub fn validate(&self) -> Result<(), StandardizeError> {
        if self.d_cap > 0.0 {
            Ok(())
        } else {
            Err(StandardizeError::NonPositiveCap(self.d_cap))
        }
    }
}

impl Default for DurationPolicy {
    fn default() -> Self {
        DurationPolicy {
            mode: DurationPolicyMode::OutlierRemoval,
            d_cap: 150.0,
        }
    }
}

/// Per-dataset standardization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetProfileConfig {
    pub descriptor: DatasetDescriptor,
    /// Protocols to retain; `None` keeps everything.
    #[serde(default)]
    pub protocol_filter: Option<Vec<Protocol>>,
    #[serde(default)]
    pub duration_policy: DurationPolicy,
}

impl NetProfileConfig {
    pub fn validate(&self) -> Result<(), StandardizeError> {
        if let Some(filter) = &self.protocol_filter {
            if filter.is_empty() {
                return Err(StandardizeError::EmptyProtocolFilter);
            }
        }
        self.duration_policy.validate()
    }
}

/// IANA service-port categorization. Total over [0, 65535].
pub fn classify_port(port: u32) -> Result<PortCategory, StandardizeError> {
    match port {
        0..=1023 => Ok(PortCategory::WellKnown),
        1024..=49151 => Ok(PortCategory::Registered),
        49152..=65535 => Ok(PortCategory::Dynamic),
        _ => Err(StandardizeError::PortOutOfRange(port)),
    }
}

/// True iff the address falls inside any of the blocks (first match).
/// IPv6 endpoints classify as external unless IPv6 blocks are configured.
pub fn classify_endpoint(ip: IpAddr, subnets: &[IpNet]) -> bool {
    subnets.iter().any(|net| net.contains(&ip))
}

/// Converts a duration to seconds.
pub fn normalize_duration(d: f64, unit: DurationUnit) -> Result<f64, StandardizeError> {
    if d < 0.0 {
        return Err(StandardizeError::NegativeDuration(d));
    }
    Ok(match unit {
        DurationUnit::Seconds => d,
        DurationUnit::Milliseconds => d / 1000.0,
    })
}

/// Apportions an integer count across fragments proportionally to fragment
/// duration: floor per fragment, residual added to the last so the sum is
/// conserved exactly.
fn apportion(total: u64, fractions: &[f64]) -> Vec<u64> {
    let mut parts: Vec<u64> = fractions
        .iter()
        .map(|f| (total as f64 * f).floor() as u64)
        .collect();
    let assigned: u64 = parts.iter().sum();
    if let Some(last) = parts.last_mut() {
        *last += total - assigned;
    }
    parts
}

/// Truncates a flow longer than `d_cap` into fragments of durations
/// `(d_cap, ..., d_cap, remainder)`, remainder in (0, d_cap]. Byte and
/// packet counts are apportioned proportionally; fragment k starts at the
/// original timestamp plus k times the cap.
pub fn split_flow(flow: &FlowRecord, d_cap: f64) -> Result<Vec<FlowRecord>, StandardizeError> {
    if d_cap <= 0.0 {
        return Err(StandardizeError::NonPositiveCap(d_cap));
    }
    if flow.duration <= d_cap {
        return Ok(vec![flow.clone()]);
    }

    let mut n_fragments = (flow.duration / d_cap).ceil() as usize;
    // Division can round up past an exact multiple; keep the remainder
    // strictly positive.
    if d_cap * (n_fragments - 1) as f64 >= flow.duration {
        n_fragments -= 1;
    }
    let mut durations = vec![d_cap; n_fragments];
    let remainder = flow.duration - d_cap * (n_fragments - 1) as f64;
    durations[n_fragments - 1] = remainder;

    let fractions: Vec<f64> = durations.iter().map(|d| d / flow.duration).collect();
    let in_bytes = apportion(flow.in_bytes, &fractions);
    let out_bytes = apportion(flow.out_bytes, &fractions);
    let in_packets = apportion(flow.in_packets, &fractions);
    let out_packets = apportion(flow.out_packets, &fractions);

    Ok((0..n_fragments)
        .map(|k| FlowRecord {
            timestamp: flow.timestamp + d_cap * k as f64,
            duration: durations[k],
            in_bytes: in_bytes[k],
            out_bytes: out_bytes[k],
            in_packets: in_packets[k],
            out_packets: out_packets[k],
            ..flow.clone()
        })
        .collect())
}

/// Outcome of applying a duration policy to one dataset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolicyOutcome {
    pub flows: Vec<FlowRecord>,
    pub dropped_outlier: u64,
    pub split_added: u64,
}

/// Applies the duration policy to flows whose durations are already in
/// seconds.
pub fn apply_duration_policy(
    flows: Vec<FlowRecord>,
    policy: &DurationPolicy,
) -> Result<PolicyOutcome, StandardizeError> {
    policy.validate()?;
    let mut out = PolicyOutcome::default();
    for mut flow in flows {
        match policy.mode {
            DurationPolicyMode::OutlierRemoval => {
                if flow.duration > policy.d_cap {
                    out.dropped_outlier += 1;
                } else {
                    out.flows.push(flow);
                }
            }
            DurationPolicyMode::ThresholdSetting => {
                if flow.duration > policy.d_cap {
                    flow.original_duration = Some(flow.duration);
                    flow.duration = policy.d_cap;
                }
                out.flows.push(flow);
            }
            DurationPolicyMode::FlowSplitting => {
                let fragments = split_flow(&flow, policy.d_cap)?;
                out.split_added += fragments.len() as u64 - 1;
                out.flows.extend(fragments);
            }
        }
    }
    Ok(out)
}

/// Record accounting for one standardized dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardizeCounters {
    pub input: u64,
    pub dropped_invalid: u64,
    pub dropped_filter: u64,
    pub dropped_outlier: u64,
    pub split_added: u64,
    pub output: u64,
}

/// A dataset in the common schema plus its accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardizedDataset {
    pub descriptor: DatasetDescriptor,
    pub samples: Vec<StandardSample>,
    pub counters: StandardizeCounters,
}

fn to_standard_sample(
    flow: &FlowRecord,
    cfg: &NetProfileConfig,
) -> Result<StandardSample, StandardizeError> {
    let subnets = &cfg.descriptor.internal_subnets;
    Ok(StandardSample {
        src_internal: classify_endpoint(flow.src_ip, subnets),
        dst_internal: classify_endpoint(flow.dst_ip, subnets),
        src_port_cat: classify_port(flow.src_port as u32)?,
        dst_port_cat: classify_port(flow.dst_port as u32)?,
        duration_s: flow.duration,
        direction_out: flow.direction.as_outgoing(),
        in_bytes: flow.in_bytes,
        out_bytes: flow.out_bytes,
        tot_bytes: flow.tot_bytes(),
        in_packets: flow.in_packets,
        out_packets: flow.out_packets,
        tot_packets: flow.tot_packets(),
        label: flow.label.clone(),
        origin_network: cfg.descriptor.network_id,
    })
}

/// Runs the full standardization pipeline over one raw dataset: validation,
/// protocol filter, duration normalization and policy, endpoint and port
/// categorization. An empty result is not an error; the counters tell the
/// story.
pub fn standardize_dataset(
    raw: &[RawFlow],
    cfg: &NetProfileConfig,
) -> Result<StandardizedDataset, StandardizeError> {
    cfg.validate()?;
    let mut counters = StandardizeCounters {
        input: raw.len() as u64,
        ..Default::default()
    };

    let mut valid = Vec::with_capacity(raw.len());
    for record in raw {
        match validate_record(record) {
            ValidationResult::Valid(rec) => valid.push(*rec),
            ValidationResult::Invalid(_) => counters.dropped_invalid += 1,
        }
    }

    if let Some(filter) = &cfg.protocol_filter {
        let before = valid.len();
        valid.retain(|f| filter.contains(&f.protocol));
        counters.dropped_filter = (before - valid.len()) as u64;
    }

    for flow in &mut valid {
        flow.duration = normalize_duration(flow.duration, cfg.descriptor.duration_unit)?;
    }

    let outcome = apply_duration_policy(valid, &cfg.duration_policy)?;
    counters.dropped_outlier = outcome.dropped_outlier;
    counters.split_added = outcome.split_added;

    let mut samples = Vec::with_capacity(outcome.flows.len());
    for flow in &outcome.flows {
        samples.push(to_standard_sample(flow, cfg)?);
    }
    counters.output = samples.len() as u64;

    Ok(StandardizedDataset {
        descriptor: cfg.descriptor.clone(),
        samples,
        counters,
    })
}
