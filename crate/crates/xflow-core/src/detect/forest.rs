//! Binary random forest on the fixed 12-feature schema: greedy Gini splits
//! over a random feature subset per node, optional bootstrap resampling,
//! majority voting, and normalized impurity-decrease importances.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flow::FEATURE_COUNT;
use crate::seed::{derive_seed, rng_from_seed};

use super::DetectError;

/// How many candidate features each node considers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// floor(sqrt(feature count)); 3 on the 12-feature schema.
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(&self, n_features: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((n_features as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => n_features,
            MaxFeatures::Count(k) => (*k).clamp(1, n_features),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestHyperparams {
    pub n_trees: usize,
    /// `None` grows until purity or `min_samples_split`.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        ForestHyperparams {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
        }
    }
}

/// One tree node. Split thresholds send `x[feature] <= threshold` left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        impurity: f64,
        samples: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// (benign, malicious) training counts in this leaf.
        counts: (usize, usize),
        malicious: bool,
    },
}

impl TreeNode {
    fn predict(&self, x: &[f64]) -> bool {
        match self {
            TreeNode::Leaf { malicious, .. } => *malicious,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub hyperparams: ForestHyperparams,
    pub seed: u64,
    /// Normalized total Gini impurity decrease per feature; sums to 1, or
    /// is identically zero for a forest that never split.
    pub importances: [f64; FEATURE_COUNT],
    pub trees: Vec<TreeNode>,
}

/// Verdict of a forest on one sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub malicious: bool,
    /// Fraction of trees voting malicious.
    pub score: f64,
}

fn gini(benign: usize, malicious: usize) -> f64 {
    let n = (benign + malicious) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = benign as f64 / n;
    let p1 = malicious as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

struct TreeBuilder<'d> {
    x: &'d [[f64; FEATURE_COUNT]],
    y: &'d [bool],
    hp: ForestHyperparams,
    rng: ChaCha8Rng,
    importances: [f64; FEATURE_COUNT],
    n_root: usize,
}

impl<'d> TreeBuilder<'d> {
    fn leaf(&self, benign: usize, malicious: usize) -> TreeNode {
        TreeNode::Leaf {
            counts: (benign, malicious),
            // Ties go to malicious: the conservative call for a detector.
            malicious: malicious >= benign,
        }
    }

    fn build(&mut self, indices: &mut [usize], depth: usize) -> TreeNode {
        let n = indices.len();
        let malicious = indices.iter().filter(|&&i| self.y[i]).count();
        let benign = n - malicious;

        let depth_capped = self.hp.max_depth.is_some_and(|d| depth >= d);
        if benign == 0 || malicious == 0 || n < self.hp.min_samples_split || depth_capped {
            return self.leaf(benign, malicious);
        }

        let impurity = gini(benign, malicious);
        let k = self.hp.max_features.resolve(FEATURE_COUNT);
        let mut candidates: Vec<usize> = (0..FEATURE_COUNT).collect();
        candidates.shuffle(&mut self.rng);
        candidates.truncate(k);
        candidates.sort_unstable();

        let mut best: Option<(f64, usize, f64)> = None;
        for &feature in &candidates {
            indices.sort_unstable_by(|&a, &b| {
                self.x[a][feature].total_cmp(&self.x[b][feature])
            });
            let mut left_malicious = 0usize;
            for i in 1..n {
                if self.y[indices[i - 1]] {
                    left_malicious += 1;
                }
                let prev = self.x[indices[i - 1]][feature];
                let cur = self.x[indices[i]][feature];
                if prev >= cur {
                    continue;
                }
                let left_n = i;
                let right_n = n - i;
                let right_malicious = malicious - left_malicious;
                let weighted = (left_n as f64 / n as f64)
                    * gini(left_n - left_malicious, left_malicious)
                    + (right_n as f64 / n as f64)
                        * gini(right_n - right_malicious, right_malicious);
                let gain = impurity - weighted;
                if gain > 1e-12 && best.map_or(true, |(g, _, _)| gain > g) {
                    best = Some((gain, feature, prev + (cur - prev) / 2.0));
                }
            }
        }

        let Some((gain, feature, threshold)) = best else {
            return self.leaf(benign, malicious);
        };
        self.importances[feature] += (n as f64 / self.n_root as f64) * gain;

        indices.sort_unstable_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
        let boundary = indices.partition_point(|&i| self.x[i][feature] <= threshold);
        let (left_idx, right_idx) = indices.split_at_mut(boundary);
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        TreeNode::Split {
            feature,
            threshold,
            impurity,
            samples: n,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Trains a forest on labelled feature rows (`true` = malicious). Requires
/// at least two samples and both labels present.
pub fn train_forest(
    features: &[[f64; FEATURE_COUNT]],
    labels: &[bool],
    hp: &ForestHyperparams,
    seed: u64,
) -> Result<RandomForest, DetectError> {
    if features.len() != labels.len() {
        return Err(DetectError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    if features.len() < 2 {
        return Err(DetectError::TooFewSamples(features.len()));
    }
    if hp.n_trees == 0 {
        return Err(DetectError::NoTrees);
    }
    let malicious = labels.iter().filter(|&&l| l).count();
    if malicious == 0 || malicious == labels.len() {
        return Err(DetectError::SingleClass);
    }

    let n = features.len();
    let results: Vec<(TreeNode, [f64; FEATURE_COUNT])> = (0..hp.n_trees)
        .into_par_iter()
        .map(|tree_no| {
            let mut rng = rng_from_seed(derive_seed(seed, "tree", tree_no as u64));
            let mut indices: Vec<usize> = if hp.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut builder = TreeBuilder {
                x: features,
                y: labels,
                hp: *hp,
                rng,
                importances: [0.0; FEATURE_COUNT],
                n_root: indices.len(),
            };
            let root = builder.build(&mut indices, 0);
            (root, builder.importances)
        })
        .collect();

    let mut importances = [0.0; FEATURE_COUNT];
    let mut trees = Vec::with_capacity(hp.n_trees);
    for (tree, imp) in results {
        trees.push(tree);
        for (total, part) in importances.iter_mut().zip(imp) {
            *total += part;
        }
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        for v in &mut importances {
            *v /= total;
        }
    }

    Ok(RandomForest {
        hyperparams: *hp,
        seed,
        importances,
        trees,
    })
}

/// Majority vote over the trees. The score is the malicious vote fraction;
/// 0.5 ties resolve to malicious.
pub fn predict(forest: &RandomForest, x: &[f64]) -> Result<Prediction, DetectError> {
    if x.len() != FEATURE_COUNT {
        return Err(DetectError::WrongArity {
            expected: FEATURE_COUNT,
            got: x.len(),
        });
    }
    let votes = forest.trees.iter().filter(|t| t.predict(x)).count();
    let score = votes as f64 / forest.trees.len() as f64;
    Ok(Prediction {
        malicious: score >= 0.5,
        score,
    })
}
