//! Builders shared by unit tests across modules.

use crate::flow::{
    AttackFamily, DatasetDescriptor, DurationUnit, Label, NetworkId, PortCategory, StandardSample,
};
use crate::standardize::StandardizedDataset;

pub fn sample(network: NetworkId, label: Label) -> StandardSample {
    StandardSample {
        src_internal: true,
        dst_internal: false,
        src_port_cat: PortCategory::Dynamic,
        dst_port_cat: PortCategory::WellKnown,
        duration_s: 1.0,
        direction_out: true,
        in_bytes: 100,
        out_bytes: 50,
        tot_bytes: 150,
        in_packets: 2,
        out_packets: 1,
        tot_packets: 3,
        label,
        origin_network: network,
    }
}

pub fn dataset(
    network: u32,
    benign: usize,
    attacks: &[(&str, AttackFamily, usize)],
) -> StandardizedDataset {
    let network = NetworkId(network);
    let mut samples = Vec::new();
    for _ in 0..benign {
        samples.push(sample(network, Label::Benign));
    }
    for (class, family, count) in attacks {
        for _ in 0..*count {
            samples.push(sample(network, Label::malicious(*class, *family)));
        }
    }
    StandardizedDataset {
        descriptor: DatasetDescriptor {
            network_id: network,
            name: format!("net{network}"),
            internal_subnets: vec![],
            duration_unit: DurationUnit::Seconds,
            d_max: None,
        },
        samples,
        counters: Default::default(),
    }
}
