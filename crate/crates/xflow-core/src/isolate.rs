//! Stage 2: partition standardized datasets into per-network benign pools
//! and the network-by-attack-class grid of malicious sample sets.
//!
//! Rows are networks (sorted by id), columns are attack classes (sorted by
//! name, after granularity merges). Cells may be empty: a class present in
//! one network still owns a column in every row.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{AttackFamily, Label, NetworkId, FEATURE_COUNT};
use crate::standardize::StandardizedDataset;

#[derive(Debug, Error)]
pub enum IsolateError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus has no benign samples in any network")]
    NoBenign,
    #[error("corpus has no malicious samples in any network")]
    NoMalicious,
    #[error("duplicate network id {0}")]
    DuplicateNetwork(NetworkId),
    #[error("class `{class}` maps to both family {a} and family {b}")]
    FamilyConflict {
        class: String,
        a: AttackFamily,
        b: AttackFamily,
    },
    #[error("granularity merge target `{0}` is itself a merge source")]
    MergeTargetIsSource(String),
    #[error("granularity merge target `{target}` collides with unmerged class `{target}`")]
    MergeTargetCollision { target: String },
}

/// Unique identity of a sample within one isolated corpus. Used to prove
/// train/eval disjointness.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct SampleId(pub u64);

/// A sample reduced to what the later stages need: identity, provenance and
/// the encoded feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSample {
    pub id: SampleId,
    pub origin: NetworkId,
    /// Column index of the attack class; `None` for benign samples.
    pub class: Option<usize>,
    pub features: [f64; FEATURE_COUNT],
}

impl CorpusSample {
    pub fn is_malicious(&self) -> bool {
        self.class.is_some()
    }
}

/// The per-network benign pools. Every network in the corpus owns a row,
/// possibly empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenignSet {
    rows: Vec<(NetworkId, Vec<CorpusSample>)>,
}

impl BenignSet {
    pub fn networks(&self) -> impl Iterator<Item = NetworkId> + '_ {
        self.rows.iter().map(|(n, _)| *n)
    }

    pub fn pool(&self, network: NetworkId) -> Option<&[CorpusSample]> {
        self.rows
            .iter()
            .find(|(n, _)| *n == network)
            .map(|(_, v)| v.as_slice())
    }

    pub fn total_samples(&self) -> usize {
        self.rows.iter().map(|(_, v)| v.len()).sum()
    }
}

/// The n-by-mu grid of malicious sample sets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MaliciousMatrix {
    networks: Vec<NetworkId>,
    class_index: Vec<String>,
    family_of: BTreeMap<String, AttackFamily>,
    grid: Vec<Vec<Vec<CorpusSample>>>,
}

impl MaliciousMatrix {
    pub fn networks(&self) -> &[NetworkId] {
        &self.networks
    }

    /// Ordered attack-class names; the column layout of the grid.
    pub fn class_index(&self) -> &[String] {
        &self.class_index
    }

    pub fn class_count(&self) -> usize {
        self.class_index.len()
    }

    pub fn class_position(&self, name: &str) -> Option<usize> {
        self.class_index.iter().position(|c| c == name)
    }

    pub fn class_name(&self, class: usize) -> Option<&str> {
        self.class_index.get(class).map(|s| s.as_str())
    }

    pub fn family(&self, class: usize) -> Option<AttackFamily> {
        self.class_name(class)
            .and_then(|name| self.family_of.get(name).copied())
    }

    pub fn family_map(&self) -> &BTreeMap<String, AttackFamily> {
        &self.family_of
    }

    fn row_index(&self, network: NetworkId) -> Option<usize> {
        self.networks.iter().position(|n| *n == network)
    }

    pub fn cell(&self, network: NetworkId, class: usize) -> Option<&[CorpusSample]> {
        let row = self.row_index(network)?;
        self.grid[row].get(class).map(|v| v.as_slice())
    }

    /// Coordinates of every cell holding at least one sample, row-major.
    pub fn non_empty_cells(&self) -> Vec<(NetworkId, usize)> {
        let mut out = Vec::new();
        for (r, network) in self.networks.iter().enumerate() {
            for (c, cell) in self.grid[r].iter().enumerate() {
                if !cell.is_empty() {
                    out.push((*network, c));
                }
            }
        }
        out
    }

    pub fn total_samples(&self) -> usize {
        self.grid
            .iter()
            .flat_map(|row| row.iter().map(|cell| cell.len()))
            .sum()
    }

    /// Occupancy matrix (rows = networks, columns = classes, values =
    /// sample counts) rendered as CSV.
    pub fn occupancy_csv(&self) -> String {
        let mut out = String::from("network");
        for class in &self.class_index {
            out.push(',');
            out.push_str(class);
        }
        out.push('\n');
        for (r, network) in self.networks.iter().enumerate() {
            out.push_str(&network.to_string());
            for cell in &self.grid[r] {
                out.push(',');
                out.push_str(&cell.len().to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Optional class aggregation applied while isolating.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GranularityMap {
    /// Renames from original attack class to aggregated class.
    #[serde(default)]
    pub merges: BTreeMap<String, String>,
    /// Cells with fewer samples than this are emptied (0 disables).
    #[serde(default)]
    pub drop_below: usize,
}

impl GranularityMap {
    pub fn apply(&self, class: &str) -> String {
        self.merges
            .get(class)
            .cloned()
            .unwrap_or_else(|| class.to_string())
    }

    fn validate(&self, original_classes: &BTreeSet<String>) -> Result<(), IsolateError> {
        for (source, target) in &self.merges {
            if source == target {
                continue;
            }
            // Merging into an existing class name is allowed only when that
            // class is listed as an identity merge; chains are rejected.
            match self.merges.get(target) {
                Some(t2) if t2 != target => {
                    return Err(IsolateError::MergeTargetIsSource(target.clone()));
                }
                Some(_) => {}
                None => {
                    if original_classes.contains(target) {
                        return Err(IsolateError::MergeTargetCollision {
                            target: target.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Result of [`isolate`]: the benign pools, the malicious grid, and the
/// accounting for cells emptied by `drop_below`.
#[derive(Clone, Debug, PartialEq)]
pub struct Isolation {
    pub benign: BenignSet,
    pub malicious: MaliciousMatrix,
    /// (network, class name, dropped sample count) for every emptied cell.
    pub dropped_cells: Vec<(NetworkId, String, usize)>,
}

impl Isolation {
    pub fn total_samples(&self) -> usize {
        self.benign.total_samples() + self.malicious.total_samples()
    }
}

/// Partitions standardized datasets into benign pools and the malicious
/// grid, applying the granularity map. Every input sample lands in exactly
/// one pool or cell (minus cells emptied by `drop_below`).
pub fn isolate(
    datasets: &[StandardizedDataset],
    granularity: &GranularityMap,
) -> Result<Isolation, IsolateError> {
    if datasets.is_empty() {
        return Err(IsolateError::EmptyCorpus);
    }

    let mut networks: Vec<NetworkId> = datasets.iter().map(|d| d.descriptor.network_id).collect();
    networks.sort();
    if let Some(dup) = networks.windows(2).find(|w| w[0] == w[1]) {
        return Err(IsolateError::DuplicateNetwork(dup[0]));
    }

    let original_classes: BTreeSet<String> = datasets
        .iter()
        .flat_map(|d| d.samples.iter())
        .filter_map(|s| s.label.attack_class().map(String::from))
        .collect();
    granularity.validate(&original_classes)?;

    // Post-merge class names and their families. Merging classes of
    // conflicting families is a configuration error, not a guess.
    let mut family_of: BTreeMap<String, AttackFamily> = BTreeMap::new();
    for dataset in datasets {
        for sample in &dataset.samples {
            if let Label::Malicious { class, family } = &sample.label {
                let merged = granularity.apply(class);
                match family_of.get(&merged) {
                    None => {
                        family_of.insert(merged, *family);
                    }
                    Some(existing) if existing != family => {
                        return Err(IsolateError::FamilyConflict {
                            class: merged,
                            a: *existing,
                            b: *family,
                        });
                    }
                    _ => {}
                }
            }
        }
    }

    let class_index: Vec<String> = family_of.keys().cloned().collect();
    let class_pos: BTreeMap<&str, usize> = class_index
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    let mut benign_rows: Vec<(NetworkId, Vec<CorpusSample>)> =
        networks.iter().map(|n| (*n, Vec::new())).collect();
    let mut grid: Vec<Vec<Vec<CorpusSample>>> =
        vec![vec![Vec::new(); class_index.len()]; networks.len()];

    let mut next_id: u64 = 0;
    for dataset in datasets {
        let network = dataset.descriptor.network_id;
        let row = networks.iter().position(|n| *n == network).unwrap();
        for sample in &dataset.samples {
            let id = SampleId(next_id);
            next_id += 1;
            match &sample.label {
                Label::Benign => benign_rows[row].1.push(CorpusSample {
                    id,
                    origin: network,
                    class: None,
                    features: sample.feature_vector(),
                }),
                Label::Malicious { class, .. } => {
                    let col = class_pos[granularity.apply(class).as_str()];
                    grid[row][col].push(CorpusSample {
                        id,
                        origin: network,
                        class: Some(col),
                        features: sample.feature_vector(),
                    });
                }
            }
        }
    }

    let mut dropped_cells = Vec::new();
    if granularity.drop_below > 0 {
        for (r, network) in networks.iter().enumerate() {
            for (c, cell) in grid[r].iter_mut().enumerate() {
                if !cell.is_empty() && cell.len() < granularity.drop_below {
                    dropped_cells.push((*network, class_index[c].clone(), cell.len()));
                    log::debug!(
                        "dropping cell ({network}, {}) below threshold: {} samples",
                        class_index[c],
                        cell.len()
                    );
                    cell.clear();
                }
            }
        }
    }

    let benign = BenignSet { rows: benign_rows };
    let malicious = MaliciousMatrix {
        networks,
        class_index,
        family_of,
        grid,
    };

    if benign.total_samples() == 0 {
        return Err(IsolateError::NoBenign);
    }
    if malicious.total_samples() == 0 {
        return Err(IsolateError::NoMalicious);
    }

    Ok(Isolation {
        benign,
        malicious,
        dropped_cells,
    })
}
