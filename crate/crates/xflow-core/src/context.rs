//! Stage 3: compose training and evaluation sets from the benign pools and
//! the malicious grid, and classify the requested tuple into one of the ten
//! context types.
//!
//! A context is described by the origin network (sole source of benign
//! samples for both sides), two parallel arrays naming the grid cells that
//! feed the training set, two more for the evaluation set, and the split
//! fractions. Classification reduces the arrays to sets and keys on the
//! four equalities among them; the three-way equalities admit only five
//! consistent patterns, which is where the ten types come from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{AttackFamily, NetworkId};
use crate::isolate::{BenignSet, CorpusSample, MaliciousMatrix};
use crate::seed::{derive_seed, rng_from_seed};
use rand::seq::SliceRandom;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("invalid context spec: {0}")]
    InvalidSpec(String),
    #[error("network {0} is not part of the corpus")]
    UnknownNetwork(NetworkId),
    #[error("class index {0} is outside the corpus grid")]
    UnknownClass(usize),
    #[error("benign pool of network {0} is empty")]
    EmptyBenign(NetworkId),
    #[error("referenced cell ({network}, {class_name}) is empty")]
    EmptyCell {
        network: NetworkId,
        class_name: String,
    },
    #[error("equality pattern {0:?} is inconsistent for sets")]
    ImpossiblePattern([bool; 4]),
}

/// Train/eval fractions applied to one pool. Serialized as `[train, eval]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split(pub f64, pub f64);

impl Split {
    pub const DEFAULT: Split = Split(0.8, 0.2);

    pub fn train(&self) -> f64 {
        self.0
    }

    pub fn eval(&self) -> f64 {
        self.1
    }

    pub fn validate(&self) -> Result<(), ContextError> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !ok(self.0) || !ok(self.1) || self.0 + self.1 > 1.0 + 1e-9 {
            return Err(ContextError::InvalidSpec(format!(
                "split fractions must lie in (0,1) and sum to at most 1, got [{}, {}]",
                self.0, self.1
            )));
        }
        Ok(())
    }

    fn covers_pool(&self) -> bool {
        (self.0 + self.1 - 1.0).abs() < 1e-9
    }

    fn bits(&self) -> (u64, u64) {
        (self.0.to_bits(), self.1.to_bits())
    }
}

impl Default for Split {
    fn default() -> Self {
        Split::DEFAULT
    }
}

/// One cross-evaluation context request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextSpec {
    /// The network whose benign pool feeds both sides.
    pub origin: NetworkId,
    /// Networks supplying malicious training samples; paired entrywise with
    /// `train_classes`.
    pub train_networks: Vec<NetworkId>,
    pub train_classes: Vec<usize>,
    /// Networks supplying malicious evaluation samples; paired entrywise
    /// with `eval_classes`.
    pub eval_networks: Vec<NetworkId>,
    pub eval_classes: Vec<usize>,
    #[serde(default)]
    pub split_benign: Split,
    #[serde(default)]
    pub split_malicious: Split,
    pub seed: u64,
}

impl ContextSpec {
    pub fn validate(&self) -> Result<(), ContextError> {
        if self.train_networks.is_empty() || self.eval_networks.is_empty() {
            return Err(ContextError::InvalidSpec(
                "train and eval arrays must be non-empty".into(),
            ));
        }
        if self.train_networks.len() != self.train_classes.len() {
            return Err(ContextError::InvalidSpec(format!(
                "train arrays must pair up: {} networks vs {} classes",
                self.train_networks.len(),
                self.train_classes.len()
            )));
        }
        if self.eval_networks.len() != self.eval_classes.len() {
            return Err(ContextError::InvalidSpec(format!(
                "eval arrays must pair up: {} networks vs {} classes",
                self.eval_networks.len(),
                self.eval_classes.len()
            )));
        }
        self.split_benign.validate()?;
        self.split_malicious.validate()?;
        Ok(())
    }

    /// The grid cells feeding the training set, deduplicated and sorted.
    pub fn train_cells(&self) -> BTreeSet<(NetworkId, usize)> {
        self.train_networks
            .iter()
            .copied()
            .zip(self.train_classes.iter().copied())
            .collect()
    }

    /// The grid cells feeding the evaluation set, deduplicated and sorted.
    pub fn eval_cells(&self) -> BTreeSet<(NetworkId, usize)> {
        self.eval_networks
            .iter()
            .copied()
            .zip(self.eval_classes.iter().copied())
            .collect()
    }
}

/// The ten context types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ContextCode {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
    C9,
    C10,
}

impl fmt::Display for ContextCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Refinement of an inequality between two sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetRelation {
    Equal,
    /// Left strictly contains right.
    SupersetOfRight,
    /// Left strictly contained in right.
    SubsetOfRight,
    Disjoint,
    Overlapping,
}

fn set_relation<T: Ord>(left: &BTreeSet<T>, right: &BTreeSet<T>) -> SetRelation {
    if left == right {
        SetRelation::Equal
    } else if right.iter().all(|x| left.contains(x)) {
        SetRelation::SupersetOfRight
    } else if left.iter().all(|x| right.contains(x)) {
        SetRelation::SubsetOfRight
    } else if left.iter().any(|x| right.contains(x)) {
        SetRelation::Overlapping
    } else {
        SetRelation::Disjoint
    }
}

/// The four set relations that determine (and refine) a context type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRelations {
    pub origin_vs_train: SetRelation,
    pub origin_vs_eval: SetRelation,
    pub train_vs_eval: SetRelation,
    pub classes: SetRelation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextType {
    pub code: ContextCode,
    pub relations: ContextRelations,
}

/// Maps the four equality outcomes (origin = train networks, origin = eval
/// networks, train = eval networks, train classes = eval classes) to a
/// context code. Six of the sixteen patterns cannot arise from actual sets
/// (two equalities among three sets force the third) and are rejected.
pub fn context_code_from_pattern(pattern: [bool; 4]) -> Result<ContextCode, ContextError> {
    use ContextCode::*;
    let [ot, oe, te, class_eq] = pattern;
    let code = match (ot, oe, te) {
        (true, true, true) => {
            if class_eq {
                C1
            } else {
                C2
            }
        }
        (true, false, false) => {
            if class_eq {
                C3
            } else {
                C4
            }
        }
        (false, true, false) => {
            if class_eq {
                C5
            } else {
                C6
            }
        }
        (false, false, true) => {
            if class_eq {
                C7
            } else {
                C8
            }
        }
        (false, false, false) => {
            if class_eq {
                C9
            } else {
                C10
            }
        }
        _ => return Err(ContextError::ImpossiblePattern(pattern)),
    };
    Ok(code)
}

/// Classifies a context tuple. Order and duplication inside the arrays are
/// irrelevant: only the underlying sets matter.
pub fn classify_context(spec: &ContextSpec) -> Result<ContextType, ContextError> {
    spec.validate()?;
    let origin: BTreeSet<NetworkId> = [spec.origin].into_iter().collect();
    let train: BTreeSet<NetworkId> = spec.train_networks.iter().copied().collect();
    let eval: BTreeSet<NetworkId> = spec.eval_networks.iter().copied().collect();
    let train_classes: BTreeSet<usize> = spec.train_classes.iter().copied().collect();
    let eval_classes: BTreeSet<usize> = spec.eval_classes.iter().copied().collect();

    let relations = ContextRelations {
        origin_vs_train: set_relation(&origin, &train),
        origin_vs_eval: set_relation(&origin, &eval),
        train_vs_eval: set_relation(&train, &eval),
        classes: set_relation(&train_classes, &eval_classes),
    };
    let pattern = [
        relations.origin_vs_train == SetRelation::Equal,
        relations.origin_vs_eval == SetRelation::Equal,
        relations.train_vs_eval == SetRelation::Equal,
        relations.classes == SetRelation::Equal,
    ];
    // Patterns computed from actual sets are always consistent; the error
    // path exists for direct pattern queries.
    let code = context_code_from_pattern(pattern)?;
    Ok(ContextType { code, relations })
}

/// Deterministic partition of one grid cell into its train and eval parts.
///
/// Every cell is shuffled once, seeded by (run seed, cell coordinates); the
/// first `train` fraction is the train part and the following `eval`
/// fraction the eval part. Because the partition never depends on which
/// context asked for it, a cell referenced by both sides of a context (or
/// by several contexts sharing a seed) is split simultaneously and no
/// sample can land on both sides.
pub fn partition_cell(
    samples: &[CorpusSample],
    split: Split,
    seed: u64,
    network: NetworkId,
    class: usize,
) -> (Vec<CorpusSample>, Vec<CorpusSample>) {
    let tag = ((network.0 as u64) << 32) | class as u64;
    partition(samples, split, derive_seed(seed, "cell-split", tag))
}

/// Deterministic partition of a benign pool, seeded by the origin network.
pub fn partition_benign(
    samples: &[CorpusSample],
    split: Split,
    seed: u64,
    origin: NetworkId,
) -> (Vec<CorpusSample>, Vec<CorpusSample>) {
    partition(samples, split, derive_seed(seed, "benign-split", origin.0 as u64))
}

fn partition(
    samples: &[CorpusSample],
    split: Split,
    seed: u64,
) -> (Vec<CorpusSample>, Vec<CorpusSample>) {
    let mut indices: Vec<usize> = (0..samples.len()).collect();
    indices.shuffle(&mut rng_from_seed(seed));

    let n = samples.len();
    let n_train = floor_frac(n, split.train());
    let n_eval = if split.covers_pool() {
        n - n_train
    } else {
        floor_frac(n, split.eval())
    };
    let train = indices[..n_train]
        .iter()
        .map(|&i| samples[i].clone())
        .collect();
    let eval = indices[n_train..n_train + n_eval]
        .iter()
        .map(|&i| samples[i].clone())
        .collect();
    (train, eval)
}

fn floor_frac(len: usize, frac: f64) -> usize {
    ((len as f64) * frac + 1e-9).floor() as usize
}

/// One cell's contribution to a composed set.
#[derive(Clone, Debug, PartialEq)]
pub struct CellPart {
    pub network: NetworkId,
    pub class: usize,
    pub class_name: String,
    pub family: AttackFamily,
    pub samples: Vec<CorpusSample>,
}

/// Canonical identity of a composed training set: origin, the sorted cell
/// set, both splits and the seed.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SetKey {
    pub origin: NetworkId,
    pub cells: Vec<(NetworkId, usize)>,
    split_benign_bits: (u64, u64),
    split_malicious_bits: (u64, u64),
    pub seed: u64,
}

impl SetKey {
    fn new(
        origin: NetworkId,
        cells: &BTreeSet<(NetworkId, usize)>,
        spec: &ContextSpec,
    ) -> SetKey {
        SetKey {
            origin,
            cells: cells.iter().copied().collect(),
            split_benign_bits: spec.split_benign.bits(),
            split_malicious_bits: spec.split_malicious.bits(),
            seed: spec.seed,
        }
    }
}

impl fmt::Display for SetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cells: Vec<String> = self
            .cells
            .iter()
            .map(|(n, c)| format!("{n}:{c}"))
            .collect();
        write!(
            f,
            "o={}|cells={}|sn={}:{}|sm={}:{}|seed={}",
            self.origin,
            cells.join(","),
            f64::from_bits(self.split_benign_bits.0),
            f64::from_bits(self.split_benign_bits.1),
            f64::from_bits(self.split_malicious_bits.0),
            f64::from_bits(self.split_malicious_bits.1),
            self.seed
        )
    }
}

/// A composed training set: origin benign train part plus one part per
/// referenced cell, with provenance retained.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSet {
    pub key: SetKey,
    pub origin: NetworkId,
    pub benign: Vec<CorpusSample>,
    pub cells: Vec<CellPart>,
}

/// A composed evaluation set with the same structure.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSet {
    pub key: SetKey,
    pub origin: NetworkId,
    pub benign: Vec<CorpusSample>,
    pub cells: Vec<CellPart>,
}

/// The train/eval pair composed for one context.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainEvalPair {
    pub train: TrainSet,
    pub eval: EvalSet,
    pub spec: ContextSpec,
    pub context_type: ContextType,
}

fn resolve_cell<'m>(
    matrix: &'m MaliciousMatrix,
    network: NetworkId,
    class: usize,
) -> Result<&'m [CorpusSample], ContextError> {
    if !matrix.networks().contains(&network) {
        return Err(ContextError::UnknownNetwork(network));
    }
    let cell = matrix
        .cell(network, class)
        .ok_or(ContextError::UnknownClass(class))?;
    if cell.is_empty() {
        return Err(ContextError::EmptyCell {
            network,
            class_name: matrix.class_name(class).unwrap_or("?").to_string(),
        });
    }
    Ok(cell)
}

fn cell_part(
    matrix: &MaliciousMatrix,
    network: NetworkId,
    class: usize,
    samples: Vec<CorpusSample>,
) -> CellPart {
    CellPart {
        network,
        class,
        class_name: matrix.class_name(class).unwrap_or("?").to_string(),
        family: matrix.family(class).unwrap_or(AttackFamily::Other),
        samples,
    }
}

/// Composes the train/eval pair for one context. Sampling is without
/// replacement and fully determined by the spec's seed.
pub fn compose(
    benign: &BenignSet,
    matrix: &MaliciousMatrix,
    spec: &ContextSpec,
) -> Result<TrainEvalPair, ContextError> {
    spec.validate()?;
    let context_type = classify_context(spec)?;

    let pool = benign
        .pool(spec.origin)
        .ok_or(ContextError::UnknownNetwork(spec.origin))?;
    if pool.is_empty() {
        return Err(ContextError::EmptyBenign(spec.origin));
    }
    let (benign_train, benign_eval) =
        partition_benign(pool, spec.split_benign, spec.seed, spec.origin);

    let train_cells = spec.train_cells();
    let eval_cells = spec.eval_cells();

    let mut train_parts = Vec::with_capacity(train_cells.len());
    for &(network, class) in &train_cells {
        let cell = resolve_cell(matrix, network, class)?;
        let (part, _) = partition_cell(cell, spec.split_malicious, spec.seed, network, class);
        train_parts.push(cell_part(matrix, network, class, part));
    }
    let mut eval_parts = Vec::with_capacity(eval_cells.len());
    for &(network, class) in &eval_cells {
        let cell = resolve_cell(matrix, network, class)?;
        let (_, part) = partition_cell(cell, spec.split_malicious, spec.seed, network, class);
        eval_parts.push(cell_part(matrix, network, class, part));
    }

    Ok(TrainEvalPair {
        train: TrainSet {
            key: SetKey::new(spec.origin, &train_cells, spec),
            origin: spec.origin,
            benign: benign_train,
            cells: train_parts,
        },
        eval: EvalSet {
            key: SetKey::new(spec.origin, &eval_cells, spec),
            origin: spec.origin,
            benign: benign_eval,
            cells: eval_parts,
        },
        spec: spec.clone(),
        context_type,
    })
}

/// Per-spec outcome inside [`Collections`].
#[derive(Clone, Debug)]
pub struct SpecOutcome {
    pub spec: ContextSpec,
    pub context_type: Option<ContextType>,
    /// Indices into `Collections::trains` / `Collections::evals`.
    pub indices: Result<(usize, usize), String>,
}

/// Keyed collections of composed sets. Specs sharing a training-set
/// definition reference one entry, so stage 4 can reuse trained models.
#[derive(Clone, Debug, Default)]
pub struct Collections {
    pub trains: Vec<TrainSet>,
    pub evals: Vec<EvalSet>,
    pub outcomes: Vec<SpecOutcome>,
}

/// Composes every spec, deduplicating identical train and eval definitions
/// by canonical key. A failing spec records its error and does not abort
/// the rest.
pub fn build_collections(
    benign: &BenignSet,
    matrix: &MaliciousMatrix,
    specs: &[ContextSpec],
) -> Collections {
    let mut collections = Collections::default();
    let mut train_index: BTreeMap<SetKey, usize> = BTreeMap::new();
    let mut eval_index: BTreeMap<SetKey, usize> = BTreeMap::new();

    for spec in specs {
        match compose(benign, matrix, spec) {
            Ok(pair) => {
                let t_idx = *train_index.entry(pair.train.key.clone()).or_insert_with(|| {
                    collections.trains.push(pair.train.clone());
                    collections.trains.len() - 1
                });
                let e_idx = *eval_index.entry(pair.eval.key.clone()).or_insert_with(|| {
                    collections.evals.push(pair.eval.clone());
                    collections.evals.len() - 1
                });
                collections.outcomes.push(SpecOutcome {
                    spec: spec.clone(),
                    context_type: Some(pair.context_type),
                    indices: Ok((t_idx, e_idx)),
                });
            }
            Err(err) => collections.outcomes.push(SpecOutcome {
                spec: spec.clone(),
                context_type: classify_context(spec).ok(),
                indices: Err(err.to_string()),
            }),
        }
    }
    collections
}
