//! Flow records, labels, dataset descriptors and the common feature schema.
//!
//! Everything downstream of ingestion speaks the 12-feature schema returned
//! by [`feature_schema`]. Raw records ([`RawFlow`]) come straight out of the
//! ingestion CSV and may be incomplete; [`validate_record`] turns them into
//! fully-typed [`FlowRecord`]s or reports which constraints they violate.

use std::fmt;
use std::net::IpAddr;

use ipnet::IpNet;
use serde::{Deserialize, Serialize};

/// Number of predictive features every detector consumes.
pub const FEATURE_COUNT: usize = 12;

/// Identifier of the network a dataset was captured in.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NetworkId(pub u32);

impl fmt::Display for NetworkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Tcp,
    Udp,
    Icmp,
    Other,
}

impl Protocol {
    pub fn parse(s: &str) -> Option<Protocol> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" => None,
            "tcp" => Some(Protocol::Tcp),
            "udp" => Some(Protocol::Udp),
            "icmp" => Some(Protocol::Icmp),
            _ => Some(Protocol::Other),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Tcp => "tcp",
            Protocol::Udp => "udp",
            Protocol::Icmp => "icmp",
            Protocol::Other => "other",
        }
    }
}

/// Direction as reported by the exporter. Collapsed to a single boolean
/// feature during standardization (bidirectional counts as outgoing).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
    Bidirectional,
}

impl Direction {
    pub fn parse(s: &str) -> Option<Direction> {
        match s.trim().to_ascii_lowercase().as_str() {
            "in" => Some(Direction::In),
            "out" => Some(Direction::Out),
            "bidirectional" => Some(Direction::Bidirectional),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::Bidirectional => "bidirectional",
        }
    }

    /// The boolean feature value: in = false, out = true, bidirectional = true.
    pub fn as_outgoing(&self) -> bool {
        !matches!(self, Direction::In)
    }
}

/// Coarse grouping of attack classes used for report aggregation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackFamily {
    Botnet,
    Dos,
    Other,
}

impl AttackFamily {
    pub fn parse(s: &str) -> Option<AttackFamily> {
        match s.trim().to_ascii_lowercase().as_str() {
            "botnet" => Some(AttackFamily::Botnet),
            "dos" => Some(AttackFamily::Dos),
            "other" => Some(AttackFamily::Other),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AttackFamily::Botnet => "botnet",
            AttackFamily::Dos => "dos",
            AttackFamily::Other => "other",
        }
    }
}

impl fmt::Display for AttackFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground-truth label. Benign samples carry no attack class; malicious ones
/// carry exactly one, plus the family it aggregates into.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Benign,
    Malicious { class: String, family: AttackFamily },
}

impl Label {
    pub fn malicious(class: impl Into<String>, family: AttackFamily) -> Label {
        Label::Malicious {
            class: class.into(),
            family,
        }
    }

    pub fn is_malicious(&self) -> bool {
        matches!(self, Label::Malicious { .. })
    }

    pub fn attack_class(&self) -> Option<&str> {
        match self {
            Label::Benign => None,
            Label::Malicious { class, .. } => Some(class),
        }
    }

    pub fn family(&self) -> Option<AttackFamily> {
        match self {
            Label::Benign => None,
            Label::Malicious { family, .. } => Some(*family),
        }
    }
}

/// Measurement unit the exporter used for flow durations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationUnit {
    Seconds,
    Milliseconds,
}

/// IANA service-port category.
///
/// Well-known [0, 1023], registered [1024, 49151], dynamic [49152, 65535].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortCategory {
    WellKnown,
    Registered,
    Dynamic,
}

impl PortCategory {
    pub fn parse(s: &str) -> Option<PortCategory> {
        match s.trim().to_ascii_lowercase().as_str() {
            "well_known" => Some(PortCategory::WellKnown),
            "registered" => Some(PortCategory::Registered),
            "dynamic" => Some(PortCategory::Dynamic),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PortCategory::WellKnown => "well_known",
            PortCategory::Registered => "registered",
            PortCategory::Dynamic => "dynamic",
        }
    }

    /// Ordinal encoding used in feature vectors. Categories are ordered by
    /// port range, so threshold splits stay meaningful.
    pub fn ordinal(&self) -> f64 {
        match self {
            PortCategory::WellKnown => 0.0,
            PortCategory::Registered => 1.0,
            PortCategory::Dynamic => 2.0,
        }
    }
}

/// Per-dataset metadata required to standardize it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub network_id: NetworkId,
    pub name: String,
    /// CIDR blocks considered internal to this network. Blocks may overlap;
    /// membership uses first match.
    #[serde(default)]
    pub internal_subnets: Vec<IpNet>,
    pub duration_unit: DurationUnit,
    /// Maximum flow duration the exporter was configured with, in seconds.
    #[serde(default)]
    pub d_max: Option<f64>,
}

/// A flow record exactly as ingested: any field may be absent or out of
/// range. [`validate_record`] upgrades it to a [`FlowRecord`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawFlow {
    pub src_ip: Option<IpAddr>,
    pub dst_ip: Option<IpAddr>,
    /// Kept wider than 16 bits so out-of-range ports survive parsing and are
    /// rejected by validation instead of by a cast.
    pub src_port: Option<u32>,
    pub dst_port: Option<u32>,
    pub timestamp: Option<f64>,
    pub duration: Option<f64>,
    pub protocol: Option<Protocol>,
    pub in_bytes: Option<u64>,
    pub out_bytes: Option<u64>,
    pub in_packets: Option<u64>,
    pub out_packets: Option<u64>,
    pub direction: Option<Direction>,
    pub benign: Option<bool>,
    pub attack_class: Option<String>,
    pub family: Option<AttackFamily>,
}

/// A validated flow record. Duration is still in the unit declared by the
/// dataset descriptor; `original_duration` is only set when a duration
/// policy clamps the value and keeps the pre-clamp figure around for
/// derived metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub timestamp: f64,
    pub duration: f64,
    pub protocol: Protocol,
    pub in_bytes: u64,
    pub out_bytes: u64,
    pub in_packets: u64,
    pub out_packets: u64,
    pub direction: Direction,
    pub label: Label,
    #[serde(default)]
    pub original_duration: Option<f64>,
}

impl FlowRecord {
    pub fn tot_bytes(&self) -> u64 {
        self.in_bytes + self.out_bytes
    }

    pub fn tot_packets(&self) -> u64 {
        self.in_packets + self.out_packets
    }
}

/// One violated ingestion constraint.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// Field absent or unparseable.
    Missing(&'static str),
    PortOutOfRange { field: &'static str, value: u32 },
    NegativeDuration(f64),
    NonFiniteNumber(&'static str),
    /// Benign rows must not carry an attack class; malicious rows must.
    LabelClassMismatch(&'static str),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Missing(field) => write!(f, "missing or unparseable field `{field}`"),
            Violation::PortOutOfRange { field, value } => {
                write!(f, "`{field}` = {value} outside [0, 65535]")
            }
            Violation::NegativeDuration(d) => write!(f, "negative duration {d}"),
            Violation::NonFiniteNumber(field) => write!(f, "non-finite value in `{field}`"),
            Violation::LabelClassMismatch(msg) => f.write_str(msg),
        }
    }
}

/// Outcome of [`validate_record`]. Invalidity is a value, not an error.
#[derive(Clone, Debug, PartialEq)]
pub enum ValidationResult {
    Valid(Box<FlowRecord>),
    Invalid(Vec<Violation>),
}

impl ValidationResult {
    pub fn is_valid(&self) -> bool {
        matches!(self, ValidationResult::Valid(_))
    }
}

/// Checks a raw record against the ingestion contract and, when it passes,
/// returns the fully-typed record.
pub fn validate_record(raw: &RawFlow) -> ValidationResult {
    let mut violations = Vec::new();

    macro_rules! require {
        ($field:ident) => {
            match raw.$field {
                Some(v) => Some(v),
                None => {
                    violations.push(Violation::Missing(stringify!($field)));
                    None
                }
            }
        };
    }

    let src_ip = require!(src_ip);
    let dst_ip = require!(dst_ip);
    let src_port = require!(src_port);
    let dst_port = require!(dst_port);
    let timestamp = require!(timestamp);
    let duration = require!(duration);
    let protocol = require!(protocol);
    let in_bytes = require!(in_bytes);
    let out_bytes = require!(out_bytes);
    let in_packets = require!(in_packets);
    let out_packets = require!(out_packets);
    let direction = require!(direction);
    let benign = require!(benign);

    for (field, port) in [("src_port", src_port), ("dst_port", dst_port)] {
        if let Some(p) = port {
            if p > u16::MAX as u32 {
                violations.push(Violation::PortOutOfRange { field, value: p });
            }
        }
    }
    if let Some(d) = duration {
        if !d.is_finite() {
            violations.push(Violation::NonFiniteNumber("duration"));
        } else if d < 0.0 {
            violations.push(Violation::NegativeDuration(d));
        }
    }
    if let Some(t) = timestamp {
        if !t.is_finite() {
            violations.push(Violation::NonFiniteNumber("timestamp"));
        }
    }

    let label = match benign {
        Some(true) => {
            if raw.attack_class.is_some() {
                violations.push(Violation::LabelClassMismatch(
                    "benign record carries an attack class",
                ));
            }
            Some(Label::Benign)
        }
        Some(false) => match &raw.attack_class {
            Some(class) => Some(Label::malicious(
                class.clone(),
                raw.family.unwrap_or(AttackFamily::Other),
            )),
            None => {
                violations.push(Violation::LabelClassMismatch(
                    "malicious record lacks an attack class",
                ));
                None
            }
        },
        None => None,
    };

    if !violations.is_empty() {
        return ValidationResult::Invalid(violations);
    }

    ValidationResult::Valid(Box::new(FlowRecord {
        src_ip: src_ip.unwrap(),
        dst_ip: dst_ip.unwrap(),
        src_port: src_port.unwrap() as u16,
        dst_port: dst_port.unwrap() as u16,
        timestamp: timestamp.unwrap(),
        duration: duration.unwrap(),
        protocol: protocol.unwrap(),
        in_bytes: in_bytes.unwrap(),
        out_bytes: out_bytes.unwrap(),
        in_packets: in_packets.unwrap(),
        out_packets: out_packets.unwrap(),
        direction: direction.unwrap(),
        label: label.unwrap(),
        original_duration: None,
    }))
}

/// A sample in the common schema: the 12 predictive features in fixed order
/// plus label and origin metadata (never fed to a detector).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardSample {
    pub src_internal: bool,
    pub dst_internal: bool,
    pub src_port_cat: PortCategory,
    pub dst_port_cat: PortCategory,
    pub duration_s: f64,
    pub direction_out: bool,
    pub in_bytes: u64,
    pub out_bytes: u64,
    pub tot_bytes: u64,
    pub in_packets: u64,
    pub out_packets: u64,
    pub tot_packets: u64,
    pub label: Label,
    pub origin_network: NetworkId,
}

impl StandardSample {
    /// The 12 features in schema order, encoded for tree learners.
    pub fn feature_vector(&self) -> [f64; FEATURE_COUNT] {
        [
            self.src_internal as u8 as f64,
            self.dst_internal as u8 as f64,
            self.src_port_cat.ordinal(),
            self.dst_port_cat.ordinal(),
            self.duration_s,
            self.direction_out as u8 as f64,
            self.in_bytes as f64,
            self.out_bytes as f64,
            self.tot_bytes as f64,
            self.in_packets as f64,
            self.out_packets as f64,
            self.tot_packets as f64,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Bool,
    Cat,
    Num,
}

/// Descriptor of one schema feature: human-readable name, the CSV column it
/// maps to, and its kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: &'static str,
    pub column: &'static str,
    pub kind: FeatureKind,
}

const FEATURE_SCHEMA: [FeatureDescriptor; FEATURE_COUNT] = [
    FeatureDescriptor {
        name: "Source IP address internal",
        column: "src_internal",
        kind: FeatureKind::Bool,
    },
    FeatureDescriptor {
        name: "Destination IP address internal",
        column: "dst_internal",
        kind: FeatureKind::Bool,
    },
    FeatureDescriptor {
        name: "Source port type",
        column: "src_port_cat",
        kind: FeatureKind::Cat,
    },
    FeatureDescriptor {
        name: "Destination port type",
        column: "dst_port_cat",
        kind: FeatureKind::Cat,
    },
    FeatureDescriptor {
        name: "Flow Duration [s]",
        column: "duration_s",
        kind: FeatureKind::Num,
    },
    FeatureDescriptor {
        name: "Flow Direction",
        column: "direction",
        kind: FeatureKind::Bool,
    },
    FeatureDescriptor {
        name: "Incoming Bytes",
        column: "in_bytes",
        kind: FeatureKind::Num,
    },
    FeatureDescriptor {
        name: "Outgoing Bytes",
        column: "out_bytes",
        kind: FeatureKind::Num,
    },
    FeatureDescriptor {
        name: "Total Bytes",
        column: "tot_bytes",
        kind: FeatureKind::Num,
    },
    FeatureDescriptor {
        name: "Incoming Packets",
        column: "in_packets",
        kind: FeatureKind::Num,
    },
    FeatureDescriptor {
        name: "Outgoing Packets",
        column: "out_packets",
        kind: FeatureKind::Num,
    },
    FeatureDescriptor {
        name: "Total Packets",
        column: "tot_packets",
        kind: FeatureKind::Num,
    },
];

/// The fixed 12-feature schema shared by every dataset in a run.
pub fn feature_schema() -> &'static [FeatureDescriptor; FEATURE_COUNT] {
    &FEATURE_SCHEMA
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_raw() -> RawFlow {
        RawFlow {
            src_ip: Some("192.168.1.5".parse().unwrap()),
            dst_ip: Some("8.8.8.8".parse().unwrap()),
            src_port: Some(49_200),
            dst_port: Some(443),
            timestamp: Some(1_600_000_000.0),
            duration: Some(8.0),
            protocol: Some(Protocol::Tcp),
            in_bytes: Some(1200),
            out_bytes: Some(5400),
            in_packets: Some(10),
            out_packets: Some(12),
            direction: Some(Direction::Out),
            benign: Some(true),
            attack_class: None,
            family: None,
        }
    }

    #[test]
    fn valid_record_passes() {
        match validate_record(&sample_raw()) {
            ValidationResult::Valid(rec) => {
                assert_eq!(rec.duration, 8.0);
                assert_eq!(rec.label, Label::Benign);
            }
            ValidationResult::Invalid(v) => panic!("expected valid, got {v:?}"),
        }
    }

    #[test]
    fn out_of_range_port_rejected() {
        let mut raw = sample_raw();
        raw.src_port = Some(70_000);
        match validate_record(&raw) {
            ValidationResult::Invalid(v) => {
                assert!(v.iter().any(|x| matches!(
                    x,
                    Violation::PortOutOfRange {
                        field: "src_port",
                        value: 70_000
                    }
                )));
            }
            _ => panic!("expected invalid"),
        }
    }

    #[test]
    fn missing_dst_ip_rejected() {
        let mut raw = sample_raw();
        raw.dst_ip = None;
        match validate_record(&raw) {
            ValidationResult::Invalid(v) => {
                assert!(v.contains(&Violation::Missing("dst_ip")));
            }
            _ => panic!("expected invalid"),
        }
    }

    #[test]
    fn negative_duration_rejected() {
        let mut raw = sample_raw();
        raw.duration = Some(-1.0);
        assert!(!validate_record(&raw).is_valid());
    }

    #[test]
    fn malicious_without_class_rejected() {
        let mut raw = sample_raw();
        raw.benign = Some(false);
        raw.attack_class = None;
        assert!(!validate_record(&raw).is_valid());
    }

    #[test]
    fn benign_with_class_rejected() {
        let mut raw = sample_raw();
        raw.attack_class = Some("flood".into());
        assert!(!validate_record(&raw).is_valid());
    }

    #[test]
    fn schema_matches_fixed_table() {
        let schema = feature_schema();
        assert_eq!(schema.len(), 12);
        assert_eq!(schema[0].name, "Source IP address internal");
        assert_eq!(schema[0].kind, FeatureKind::Bool);
        assert_eq!(schema[4].name, "Flow Duration [s]");
        assert_eq!(schema[4].kind, FeatureKind::Num);
        assert_eq!(schema[8].name, "Total Bytes");
        assert_eq!(schema[8].kind, FeatureKind::Num);
    }

    #[test]
    fn schema_contains_no_raw_endpoint_fields() {
        for desc in feature_schema() {
            assert!(!desc.column.ends_with("_ip"));
            assert!(!desc.column.ends_with("_port"));
        }
    }

    #[test]
    fn feature_vector_additivity() {
        let s = StandardSample {
            src_internal: true,
            dst_internal: false,
            src_port_cat: PortCategory::Dynamic,
            dst_port_cat: PortCategory::WellKnown,
            duration_s: 8.0,
            direction_out: true,
            in_bytes: 1200,
            out_bytes: 5400,
            tot_bytes: 6600,
            in_packets: 10,
            out_packets: 12,
            tot_packets: 22,
            label: Label::Benign,
            origin_network: NetworkId(1),
        };
        let v = s.feature_vector();
        assert_eq!(v[8], v[6] + v[7]);
        assert_eq!(v[11], v[9] + v[10]);
        assert_eq!(v[2], 2.0);
    }
}
