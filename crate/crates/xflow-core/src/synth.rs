//! Synthetic corpus generator.
//!
//! A flow record is modelled as a communication (what the hosts exchanged)
//! passed through an environment (the network it happened in and the
//! exporter observing it). Templates describe communications; the network
//! profile supplies bandwidth, subnets and service ports; the exporter
//! profile supplies the duration cap, measurement unit and direction
//! convention. Duration is transfer time — payload over bandwidth — and
//! flows exceeding the exporter cap are chunked into multiple records with
//! counts apportioned exactly.
//!
//! Labels are a property of the communication alone: regenerating the same
//! templates under a different environment never changes any label.

use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr};

use ipnet::IpNet;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{
    AttackFamily, DatasetDescriptor, Direction, DurationUnit, FlowRecord, Label, NetworkId,
    Protocol,
};
use crate::seed::{derive_seed, rng_from_seed};
use crate::standardize::split_flow;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bandwidth must be positive, got {0}")]
    BadBandwidth(f64),
    #[error("exporter duration cap must be positive, got {0}")]
    BadDurationCap(f64),
    #[error("network `{network}` references unknown template `{template}`")]
    UnknownTemplate { network: String, template: String },
    #[error("corpus needs at least 2 networks, got {0}")]
    TooFewNetworks(usize),
    #[error("duplicate network id {0}")]
    DuplicateNetworkId(NetworkId),
    #[error("layout has no benign flows anywhere")]
    NoBenign,
    #[error("layout has no attack flows anywhere")]
    NoMalicious,
    #[error("template `{0}`: detectability must lie in [0, 1]")]
    BadDetectability(String),
    #[error("network `{0}` must declare at least one internal subnet")]
    NoSubnets(String),
}

/// Intrinsic characteristics of a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetIdProfile {
    pub bandwidth_mbps: f64,
    pub internal_subnets: Vec<IpNet>,
    /// Service name to listening port; overrides the per-kind defaults.
    #[serde(default)]
    pub service_ports: BTreeMap<String, u16>,
    /// Mean benign flows per simulated hour; sets benign inter-arrival.
    #[serde(default = "default_benign_rate")]
    pub benign_rate_per_hour: f64,
}

fn default_benign_rate() -> f64 {
    3600.0
}

/// How the exporter reports flow direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionConvention {
    /// Report the logical direction of the communication.
    InOut,
    /// Collapse everything to bidirectional.
    AlwaysBidirectional,
}

/// Exporter configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfProfile {
    /// Maximum duration of one record, in seconds; longer flows chunk.
    pub d_max_s: f64,
    pub duration_unit: DurationUnit,
    #[serde(default = "default_convention")]
    pub direction_convention: DirectionConvention,
}

fn default_convention() -> DirectionConvention {
    DirectionConvention::InOut
}

/// Behavioral shape of a communication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    BenignWeb,
    BenignTransfer,
    DosFlood,
    BotnetBeacon,
    ScanOther,
}

impl TemplateKind {
    pub fn is_attack(&self) -> bool {
        matches!(
            self,
            TemplateKind::DosFlood | TemplateKind::BotnetBeacon | TemplateKind::ScanOther
        )
    }

    fn default_family(&self) -> Option<AttackFamily> {
        match self {
            TemplateKind::DosFlood => Some(AttackFamily::Dos),
            TemplateKind::BotnetBeacon => Some(AttackFamily::Botnet),
            TemplateKind::ScanOther => Some(AttackFamily::Other),
            _ => None,
        }
    }
}

/// A communication template. Attack templates carry the class name the
/// generated flows are labelled with; the detectability knob moves the
/// attack's volume distribution away from the benign one (0 = overlapping,
/// 1 = far apart).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommTemplate {
    pub kind: TemplateKind,
    #[serde(default)]
    pub family: Option<AttackFamily>,
    #[serde(default = "default_detectability")]
    pub detectability: f64,
    /// Pins the payload median, bypassing the knob interpolation.
    #[serde(default)]
    pub payload_median_bytes: Option<f64>,
    /// Pins the payload spread; 0 makes every payload exactly the median.
    #[serde(default)]
    pub payload_sigma: Option<f64>,
    /// Service name resolved against the network's port map.
    #[serde(default)]
    pub service: Option<String>,
    /// Fraction of communications initiated from outside the network.
    /// Defaults per kind; benign web serves some inbound clients too.
    #[serde(default)]
    pub inbound_fraction: Option<f64>,
}

fn default_detectability() -> f64 {
    1.0
}

impl CommTemplate {
    fn family_or_default(&self) -> Option<AttackFamily> {
        self.family.or_else(|| self.kind.default_family())
    }
}

struct KindDefaults {
    service: &'static str,
    port: u16,
    /// Payload median when detectability = 1.
    extreme_median: f64,
    sigma_at_one: f64,
    in_fraction: f64,
    packet_payload: f64,
    /// Probability the communication is initiated from outside.
    inbound_fraction: f64,
    protocol: Protocol,
}

const BENIGN_WEB_MEDIAN: f64 = 30_000.0;

fn kind_defaults(kind: TemplateKind) -> KindDefaults {
    match kind {
        TemplateKind::BenignWeb => KindDefaults {
            service: "web",
            port: 443,
            extreme_median: BENIGN_WEB_MEDIAN,
            sigma_at_one: 0.8,
            in_fraction: 0.85,
            packet_payload: 1400.0,
            inbound_fraction: 0.3,
            protocol: Protocol::Tcp,
        },
        TemplateKind::BenignTransfer => KindDefaults {
            service: "transfer",
            port: 22,
            extreme_median: 2_000_000.0,
            sigma_at_one: 0.7,
            in_fraction: 0.05,
            packet_payload: 1400.0,
            inbound_fraction: 0.1,
            protocol: Protocol::Tcp,
        },
        TemplateKind::DosFlood => KindDefaults {
            service: "flood",
            port: 80,
            extreme_median: 80.0,
            sigma_at_one: 0.3,
            in_fraction: 0.9,
            packet_payload: 60.0,
            inbound_fraction: 1.0,
            protocol: Protocol::Tcp,
        },
        TemplateKind::BotnetBeacon => KindDefaults {
            service: "beacon",
            port: 6667,
            extreme_median: 512.0,
            sigma_at_one: 0.05,
            in_fraction: 0.4,
            packet_payload: 128.0,
            inbound_fraction: 0.0,
            protocol: Protocol::Tcp,
        },
        TemplateKind::ScanOther => KindDefaults {
            service: "scan",
            port: 0, // destination port sprayed across the whole range
            extreme_median: 60.0,
            sigma_at_one: 0.2,
            in_fraction: 0.5,
            packet_payload: 60.0,
            inbound_fraction: 1.0,
            protocol: Protocol::Tcp,
        },
    }
}

/// Log-space interpolation from the benign volume towards the kind's
/// extreme, driven by the detectability knob.
fn knob_median(kind: TemplateKind, knob: f64) -> f64 {
    let d = kind_defaults(kind);
    if !kind.is_attack() {
        return d.extreme_median;
    }
    (BENIGN_WEB_MEDIAN.ln() + knob * (d.extreme_median.ln() - BENIGN_WEB_MEDIAN.ln())).exp()
}

fn knob_sigma(kind: TemplateKind, knob: f64) -> f64 {
    let d = kind_defaults(kind);
    if !kind.is_attack() {
        return d.sigma_at_one;
    }
    0.8 + knob * (d.sigma_at_one - 0.8)
}

fn host_in(subnet: &IpNet, index: u32) -> IpAddr {
    match subnet {
        IpNet::V4(net) => {
            let base = u32::from(net.network());
            let host_bits = 32 - net.prefix_len() as u32;
            let span = if host_bits >= 2 {
                (1u32 << host_bits.min(31)) - 2
            } else {
                1
            };
            IpAddr::V4(Ipv4Addr::from(base + 1 + (index % span)))
        }
        IpNet::V6(net) => {
            let mut segments = net.network().segments();
            segments[7] = segments[7].wrapping_add(1 + (index as u16 % 4096));
            IpAddr::V6(segments.into())
        }
    }
}

fn external_host(rng: &mut ChaCha8Rng) -> IpAddr {
    // Documentation range plus a rotating low octet keeps peers plausible
    // and clearly external.
    IpAddr::V4(Ipv4Addr::new(
        203,
        0,
        113,
        rng.gen_range(1..=254),
    ))
}

fn sample_payload(rng: &mut ChaCha8Rng, median: f64, sigma: f64) -> u64 {
    if sigma <= 0.0 {
        return median.round().max(1.0) as u64;
    }
    let dist = LogNormal::new(median.ln(), sigma).expect("sigma checked positive");
    dist.sample(rng).round().max(1.0) as u64
}

const EPOCH_START: f64 = 1_600_000_000.0;

/// Generates all records for one template on one network.
fn generate_template_flows(
    netid: &NetIdProfile,
    conf: &ConfProfile,
    template: &CommTemplate,
    class_name: &str,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FlowRecord>, SynthError> {
    let defaults = kind_defaults(template.kind);
    let knob = template.detectability;
    if !(0.0..=1.0).contains(&knob) {
        return Err(SynthError::BadDetectability(class_name.to_string()));
    }

    let median = template
        .payload_median_bytes
        .unwrap_or_else(|| knob_median(template.kind, knob));
    let sigma = template
        .payload_sigma
        .unwrap_or_else(|| knob_sigma(template.kind, knob));

    let service_name = template.service.as_deref().unwrap_or(defaults.service);
    let service_port = netid
        .service_ports
        .get(service_name)
        .copied()
        .unwrap_or(defaults.port);

    let label = if template.kind.is_attack() {
        Label::Malicious {
            class: class_name.to_string(),
            family: template.family_or_default().unwrap_or(AttackFamily::Other),
        }
    } else {
        Label::Benign
    };

    let mean_gap = match template.kind {
        TemplateKind::DosFlood => 0.002,
        TemplateKind::BotnetBeacon => 0.0, // period-driven below
        TemplateKind::ScanOther => 0.01,
        _ => 3600.0 / netid.benign_rate_per_hour.max(1.0),
    };
    let beacon_period = 30.0 * (1.0 + (1.0 - knob));
    let mut clock = EPOCH_START + rng.gen_range(0.0..60.0);

    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        clock += match template.kind {
            TemplateKind::BotnetBeacon => {
                let jitter = rng.gen_range(-0.1..0.1);
                beacon_period * (1.0 + jitter)
            }
            _ => {
                let u: f64 = rng.gen_range(1e-9..1.0);
                -mean_gap * u.ln()
            }
        };

        let payload = sample_payload(rng, median, sigma);
        let in_bytes = ((payload as f64) * defaults.in_fraction).floor() as u64;
        let out_bytes = payload - in_bytes;
        let pkt = defaults.packet_payload;
        let in_packets = if in_bytes == 0 {
            0
        } else {
            ((in_bytes as f64 / pkt).ceil() as u64).max(1)
        };
        let out_packets = if out_bytes == 0 {
            0
        } else {
            ((out_bytes as f64 / pkt).ceil() as u64).max(1)
        };

        let inbound_fraction = template
            .inbound_fraction
            .unwrap_or(defaults.inbound_fraction);
        let inbound = rng.gen_range(0.0..1.0) < inbound_fraction;
        let internal = host_in(&netid.internal_subnets[0], rng.gen_range(0..1024));
        let external = external_host(rng);
        let (src_ip, dst_ip) = if inbound {
            (external, internal)
        } else {
            (internal, external)
        };
        let dst_port = match template.kind {
            TemplateKind::ScanOther => rng.gen_range(1..=65535),
            _ => service_port,
        };
        let src_port: u16 = rng.gen_range(49152..=65535);
        let direction = match conf.direction_convention {
            DirectionConvention::AlwaysBidirectional => Direction::Bidirectional,
            DirectionConvention::InOut => {
                if inbound {
                    Direction::In
                } else {
                    Direction::Out
                }
            }
        };

        let duration_s = (payload as f64) * 8.0 / (netid.bandwidth_mbps * 1e6);
        let base = FlowRecord {
            src_ip,
            dst_ip,
            src_port,
            dst_port,
            timestamp: clock,
            duration: duration_s,
            protocol: defaults.protocol,
            in_bytes,
            out_bytes,
            in_packets,
            out_packets,
            direction,
            label: label.clone(),
            original_duration: None,
        };
        // Exporter chops flows longer than its cap into several records.
        let chunks =
            split_flow(&base, conf.d_max_s).map_err(|_| SynthError::BadDurationCap(conf.d_max_s))?;
        records.extend(chunks);
    }

    if conf.duration_unit == DurationUnit::Milliseconds {
        for r in &mut records {
            r.duration *= 1000.0;
        }
    }
    Ok(records)
}

/// Generates one network's raw dataset.
pub fn generate_network(
    network_id: NetworkId,
    name: &str,
    netid: &NetIdProfile,
    conf: &ConfProfile,
    templates: &[(String, CommTemplate, usize)],
    seed: u64,
) -> Result<(Vec<FlowRecord>, DatasetDescriptor), SynthError> {
    if netid.bandwidth_mbps <= 0.0 {
        return Err(SynthError::BadBandwidth(netid.bandwidth_mbps));
    }
    if conf.d_max_s <= 0.0 {
        return Err(SynthError::BadDurationCap(conf.d_max_s));
    }
    if netid.internal_subnets.is_empty() {
        return Err(SynthError::NoSubnets(name.to_string()));
    }

    let mut records = Vec::new();
    for (template_no, (class_name, template, count)) in templates.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(
            seed,
            "template",
            ((network_id.0 as u64) << 32) | template_no as u64,
        ));
        records.extend(generate_template_flows(
            netid, conf, template, class_name, *count, &mut rng,
        )?);
    }

    let descriptor = DatasetDescriptor {
        network_id,
        name: name.to_string(),
        internal_subnets: netid.internal_subnets.clone(),
        duration_unit: conf.duration_unit,
        d_max: Some(conf.d_max_s),
    };
    Ok((records, descriptor))
}

/// One network's slice of a corpus manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub network_id: NetworkId,
    pub name: String,
    #[serde(flatten)]
    pub netid: NetIdProfile,
    #[serde(flatten)]
    pub conf: ConfProfile,
    /// Template name to flow count. Shared names across networks share the
    /// template definition, so the same communication appears under each
    /// network's own environment.
    pub flows: BTreeMap<String, usize>,
}

/// A full corpus manifest; serializable, so a corpus can be regenerated
/// from its manifest alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub templates: BTreeMap<String, CommTemplate>,
    pub networks: Vec<NetworkSpec>,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.networks.len() < 2 {
            return Err(SynthError::TooFewNetworks(self.networks.len()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for network in &self.networks {
            if !ids.insert(network.network_id) {
                return Err(SynthError::DuplicateNetworkId(network.network_id));
            }
            for name in network.flows.keys() {
                if !self.templates.contains_key(name) {
                    return Err(SynthError::UnknownTemplate {
                        network: network.name.clone(),
                        template: name.clone(),
                    });
                }
            }
        }
        let mut has_benign = false;
        let mut has_attack = false;
        for network in &self.networks {
            for (name, count) in &network.flows {
                if *count == 0 {
                    continue;
                }
                if self.templates[name].kind.is_attack() {
                    has_attack = true;
                } else {
                    has_benign = true;
                }
            }
        }
        if !has_benign {
            return Err(SynthError::NoBenign);
        }
        if !has_attack {
            return Err(SynthError::NoMalicious);
        }
        Ok(())
    }
}

/// Generates every network of a corpus manifest.
pub fn generate_corpus(
    spec: &CorpusSpec,
) -> Result<Vec<(Vec<FlowRecord>, DatasetDescriptor)>, SynthError> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.networks.len());
    for network in &spec.networks {
        let templates: Vec<(String, CommTemplate, usize)> = network
            .flows
            .iter()
            .map(|(name, count)| (name.clone(), spec.templates[name].clone(), *count))
            .collect();
        out.push(generate_network(
            network.network_id,
            &network.name,
            &network.netid,
            &network.conf,
            &templates,
            derive_seed(spec.seed, "network", network.network_id.0 as u64),
        )?);
    }
    Ok(out)
}
