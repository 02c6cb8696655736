//! CSV readers and writers for the two on-disk sample formats.
//!
//! Ingestion contract: comma-separated, UTF-8, header row with the canonical
//! column names `src_ip, dst_ip, src_port, dst_port, timestamp, duration,
//! protocol, in_bytes, out_bytes, in_packets, out_packets, direction, label,
//! attack_class`. An optional `family` column assigns malicious rows to a
//! report family (default `other`). Extra columns are ignored.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::flow::{
    feature_schema, AttackFamily, Direction, DurationUnit, FlowRecord, Label, NetworkId,
    PortCategory, Protocol, RawFlow, StandardSample,
};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

pub const INGEST_COLUMNS: [&str; 14] = [
    "src_ip",
    "dst_ip",
    "src_port",
    "dst_port",
    "timestamp",
    "duration",
    "protocol",
    "in_bytes",
    "out_bytes",
    "in_packets",
    "out_packets",
    "direction",
    "label",
    "attack_class",
];

struct ColumnMap {
    idx: Vec<Option<usize>>,
    family: Option<usize>,
}

fn map_columns(headers: &csv::StringRecord) -> Result<ColumnMap, CsvError> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut idx = Vec::with_capacity(INGEST_COLUMNS.len());
    for name in INGEST_COLUMNS {
        let pos = find(name);
        if pos.is_none() {
            return Err(CsvError::MissingColumn(name.to_string()));
        }
        idx.push(pos);
    }
    Ok(ColumnMap {
        idx,
        family: find("family"),
    })
}

fn cell<'a>(record: &'a csv::StringRecord, pos: Option<usize>) -> Option<&'a str> {
    pos.and_then(|i| record.get(i)).and_then(|s| {
        let s = s.trim();
        if s.is_empty() {
            None
        } else {
            Some(s)
        }
    })
}

fn raw_from_record(record: &csv::StringRecord, cols: &ColumnMap) -> RawFlow {
    let get = |i: usize| cell(record, cols.idx[i]);
    RawFlow {
        src_ip: get(0).and_then(|s| s.parse().ok()),
        dst_ip: get(1).and_then(|s| s.parse().ok()),
        src_port: get(2).and_then(|s| s.parse().ok()),
        dst_port: get(3).and_then(|s| s.parse().ok()),
        timestamp: get(4).and_then(|s| s.parse().ok()),
        duration: get(5).and_then(|s| s.parse().ok()),
        protocol: get(6).and_then(Protocol::parse),
        in_bytes: get(7).and_then(|s| s.parse().ok()),
        out_bytes: get(8).and_then(|s| s.parse().ok()),
        in_packets: get(9).and_then(|s| s.parse().ok()),
        out_packets: get(10).and_then(|s| s.parse().ok()),
        direction: get(11).and_then(Direction::parse),
        benign: get(12).and_then(|s| match s.to_ascii_lowercase().as_str() {
            "benign" => Some(true),
            "malicious" => Some(false),
            _ => None,
        }),
        attack_class: get(13).map(|s| s.to_string()),
        family: cell(record, cols.family).and_then(AttackFamily::parse),
    }
}

/// Reads an ingestion CSV into raw flows. Validation happens later, so a
/// mangled row surfaces as an invalid record rather than a hard error.
pub fn read_raw_flows<R: Read>(reader: R) -> Result<Vec<RawFlow>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let cols = map_columns(rdr.headers()?)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        out.push(raw_from_record(&record?, &cols));
    }
    Ok(out)
}

pub fn read_raw_flows_path(path: impl AsRef<Path>) -> Result<Vec<RawFlow>, CsvError> {
    let file = std::fs::File::open(path)?;
    read_raw_flows(std::io::BufReader::new(file))
}

/// Writes flow records in the ingestion contract, including the `family`
/// column for malicious rows.
pub fn write_flow_records<W: Write>(writer: W, records: &[FlowRecord]) -> Result<(), CsvError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = INGEST_COLUMNS.to_vec();
    header.push("family");
    wtr.write_record(&header)?;
    for r in records {
        let (label, class, family) = match &r.label {
            Label::Benign => ("benign", String::new(), ""),
            Label::Malicious { class, family } => ("malicious", class.clone(), family.as_str()),
        };
        wtr.write_record([
            r.src_ip.to_string().as_str(),
            r.dst_ip.to_string().as_str(),
            r.src_port.to_string().as_str(),
            r.dst_port.to_string().as_str(),
            fmt_f64(r.timestamp).as_str(),
            fmt_f64(r.duration).as_str(),
            r.protocol.as_str(),
            r.in_bytes.to_string().as_str(),
            r.out_bytes.to_string().as_str(),
            r.in_packets.to_string().as_str(),
            r.out_packets.to_string().as_str(),
            r.direction.as_str(),
            label,
            class.as_str(),
            family,
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_flow_records_path(
    path: impl AsRef<Path>,
    records: &[FlowRecord],
) -> Result<(), CsvError> {
    let file = std::fs::File::create(path)?;
    write_flow_records(std::io::BufWriter::new(file), records)
}

// Shortest representation that parses back to the same f64.
fn fmt_f64(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // serde_json uses ryu internally; format via it to keep round-trip
    // fidelity without an extra dependency.
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

const STANDARD_META_COLUMNS: [&str; 4] = ["label", "attack_class", "family", "origin_network"];

/// Column order of the standardized CSV: the 12 schema features followed by
/// label, attack_class, family and origin_network metadata.
pub fn standard_columns() -> Vec<&'static str> {
    feature_schema()
        .iter()
        .map(|d| d.column)
        .chain(STANDARD_META_COLUMNS)
        .collect()
}

/// Writes standardized samples with the schema header.
pub fn write_standard_samples<W: Write>(
    writer: W,
    samples: &[StandardSample],
) -> Result<(), CsvError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(standard_columns())?;
    for s in samples {
        let (label, class, family) = match &s.label {
            Label::Benign => ("benign", String::new(), ""),
            Label::Malicious { class, family } => ("malicious", class.clone(), family.as_str()),
        };
        wtr.write_record([
            bool_str(s.src_internal),
            bool_str(s.dst_internal),
            s.src_port_cat.as_str(),
            s.dst_port_cat.as_str(),
            fmt_f64(s.duration_s).as_str(),
            bool_str(s.direction_out),
            s.in_bytes.to_string().as_str(),
            s.out_bytes.to_string().as_str(),
            s.tot_bytes.to_string().as_str(),
            s.in_packets.to_string().as_str(),
            s.out_packets.to_string().as_str(),
            s.tot_packets.to_string().as_str(),
            label,
            class.as_str(),
            family,
            s.origin_network.to_string().as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_standard_samples_path(
    path: impl AsRef<Path>,
    samples: &[StandardSample],
) -> Result<(), CsvError> {
    let file = std::fs::File::create(path)?;
    write_standard_samples(std::io::BufWriter::new(file), samples)
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

/// Reads standardized samples back; strict, since this format is produced
/// by the toolkit itself.
pub fn read_standard_samples<R: Read>(reader: R) -> Result<Vec<StandardSample>, CsvError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = standard_columns();
    let mut idx = Vec::with_capacity(expected.len());
    for name in &expected {
        match headers.iter().position(|h| h.trim() == *name) {
            Some(i) => idx.push(i),
            None => return Err(CsvError::MissingColumn(name.to_string())),
        }
    }

    let mut out = Vec::new();
    for (row_no, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(idx[i]).unwrap_or("").trim();
        let err = |message: String| CsvError::Row {
            row: row_no + 2,
            message,
        };
        let parse_bool = |i: usize| match field(i) {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(err(format!("bad boolean `{other}`"))),
        };
        let parse_cat = |i: usize| {
            PortCategory::parse(field(i))
                .ok_or_else(|| err(format!("bad port category `{}`", field(i))))
        };
        let parse_u64 =
            |i: usize| field(i).parse::<u64>().map_err(|e| err(format!("{e}")));

        let label = match field(12) {
            "benign" => Label::Benign,
            "malicious" => {
                let class = field(13).to_string();
                if class.is_empty() {
                    return Err(err("malicious row without attack_class".into()));
                }
                let family = AttackFamily::parse(field(14)).unwrap_or(AttackFamily::Other);
                Label::Malicious { class, family }
            }
            other => return Err(err(format!("bad label `{other}`"))),
        };
        out.push(StandardSample {
            src_internal: parse_bool(0)?,
            dst_internal: parse_bool(1)?,
            src_port_cat: parse_cat(2)?,
            dst_port_cat: parse_cat(3)?,
            duration_s: field(4)
                .parse::<f64>()
                .map_err(|e| err(format!("{e}")))?,
            direction_out: parse_bool(5)?,
            in_bytes: parse_u64(6)?,
            out_bytes: parse_u64(7)?,
            tot_bytes: parse_u64(8)?,
            in_packets: parse_u64(9)?,
            out_packets: parse_u64(10)?,
            tot_packets: parse_u64(11)?,
            label,
            origin_network: NetworkId(
                field(15)
                    .parse::<u32>()
                    .map_err(|e| err(format!("{e}")))?,
            ),
        });
    }
    Ok(out)
}

/// Declared duration unit of a dataset, exposed here so readers do not need
/// to thread the descriptor through.
pub fn duration_unit_name(unit: DurationUnit) -> &'static str {
    match unit {
        DurationUnit::Seconds => "seconds",
        DurationUnit::Milliseconds => "milliseconds",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::validate_record;

    const SAMPLE_CSV: &str = "\
src_ip,dst_ip,src_port,dst_port,timestamp,duration,protocol,in_bytes,out_bytes,in_packets,out_packets,direction,label,attack_class,family
192.168.1.5,8.8.8.8,49200,443,1600000000,8.0,tcp,1200,5400,10,12,out,benign,,
10.0.0.3,192.168.1.5,51000,80,1600000010,0.5,tcp,300,40,4,2,in,malicious,flood,dos
,8.8.4.4,20,53,1600000020,1.0,udp,100,100,1,1,out,benign,,
";

    #[test]
    fn reads_ingestion_contract() {
        let raws = read_raw_flows(SAMPLE_CSV.as_bytes()).unwrap();
        assert_eq!(raws.len(), 3);
        assert_eq!(raws[0].benign, Some(true));
        assert_eq!(raws[1].attack_class.as_deref(), Some("flood"));
        assert_eq!(raws[1].family, Some(AttackFamily::Dos));
        assert!(raws[2].src_ip.is_none());
        assert!(validate_record(&raws[0]).is_valid());
        assert!(!validate_record(&raws[2]).is_valid());
    }

    #[test]
    fn missing_column_is_an_error() {
        let res = read_raw_flows("src_ip,dst_ip\n1.2.3.4,5.6.7.8\n".as_bytes());
        assert!(matches!(res, Err(CsvError::MissingColumn(_))));
    }

    #[test]
    fn flow_record_roundtrip() {
        let raws = read_raw_flows(SAMPLE_CSV.as_bytes()).unwrap();
        let records: Vec<FlowRecord> = raws
            .iter()
            .filter_map(|r| match validate_record(r) {
                crate::flow::ValidationResult::Valid(rec) => Some(*rec),
                _ => None,
            })
            .collect();
        assert_eq!(records.len(), 2);

        let mut buf = Vec::new();
        write_flow_records(&mut buf, &records).unwrap();
        let again = read_raw_flows(buf.as_slice()).unwrap();
        let records2: Vec<FlowRecord> = again
            .iter()
            .filter_map(|r| match validate_record(r) {
                crate::flow::ValidationResult::Valid(rec) => Some(*rec),
                _ => None,
            })
            .collect();
        assert_eq!(records, records2);
    }

    #[test]
    fn standard_sample_roundtrip() {
        let s = StandardSample {
            src_internal: true,
            dst_internal: false,
            src_port_cat: PortCategory::Dynamic,
            dst_port_cat: PortCategory::WellKnown,
            duration_s: 0.125,
            direction_out: true,
            in_bytes: 1200,
            out_bytes: 5400,
            tot_bytes: 6600,
            in_packets: 10,
            out_packets: 12,
            tot_packets: 22,
            label: Label::malicious("beacon", AttackFamily::Botnet),
            origin_network: NetworkId(3),
        };
        let mut buf = Vec::new();
        write_standard_samples(&mut buf, std::slice::from_ref(&s)).unwrap();
        let parsed = read_standard_samples(buf.as_slice()).unwrap();
        assert_eq!(parsed, vec![s]);
    }
}
