//! Random forest of CART-style trees: Gini impurity, bootstrap resampling,
//! and a random feature subset at every split. Fully deterministic given the
//! seed; trees are stored as explicit split records.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::FEATURE_COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        positive: bool,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// Arena index of the subtree for values <= threshold.
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn vote(&self, row: &[f64; FEATURE_COUNT]) -> bool {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { positive } => return *positive,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

struct TreeBuilder<'a> {
    rows: &'a [[f64; FEATURE_COUNT]],
    is_positive: &'a [bool],
    features_per_split: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    /// Builds the subtree over `samples` (bootstrap indices, duplicates
    /// allowed) and returns its arena index.
    fn build(&mut self, samples: &[usize], rng: &mut ChaCha8Rng) -> usize {
        let pos = samples.iter().filter(|&&i| self.is_positive[i]).count();
        let total = samples.len();
        if pos == 0 || pos == total {
            return self.leaf(pos, total);
        }

        let sampled = sample(rng, FEATURE_COUNT, self.features_per_split).into_vec();
        let mut best = self.best_split(samples, &sampled, gini(pos, total));
        if best.is_none() && self.features_per_split < FEATURE_COUNT {
            // none of the sampled features admits a split; consider the rest
            // before declaring an impure leaf
            let rest: Vec<usize> =
                (0..FEATURE_COUNT).filter(|f| !sampled.contains(f)).collect();
            best = self.best_split(samples, &rest, gini(pos, total));
        }
        let Some((feature, threshold)) = best else {
            return self.leaf(pos, total);
        };

        let (left_samples, right_samples): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| self.rows[i][feature] <= threshold);
        let node_idx = self.nodes.len();
        self.nodes.push(Node::Leaf { positive: false }); // placeholder
        let left = self.build(&left_samples, rng);
        let right = self.build(&right_samples, rng);
        self.nodes[node_idx] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        node_idx
    }

    fn leaf(&mut self, pos: usize, total: usize) -> usize {
        self.nodes.push(Node::Leaf {
            // exact tie goes to the restrictive (negative) class
            positive: 2 * pos > total,
        });
        self.nodes.len() - 1
    }

    /// Best (feature, threshold) among `features` by weighted Gini, or None
    /// when no candidate improves on the parent impurity. Thresholds are
    /// midpoints between consecutive distinct values.
    fn best_split(
        &self,
        samples: &[usize],
        features: &[usize],
        parent_gini: f64,
    ) -> Option<(usize, f64)> {
        let total = samples.len();
        let total_pos = samples.iter().filter(|&&i| self.is_positive[i]).count();
        let mut best: Option<(f64, usize, f64)> = None;
        for &feature in features {
            let mut values: Vec<(f64, bool)> = samples
                .iter()
                .map(|&i| (self.rows[i][feature], self.is_positive[i]))
                .collect();
            values.sort_by(|a, b| a.partial_cmp(b).expect("feature values are finite"));
            let mut left_pos = 0;
            for split_at in 1..total {
                if values[split_at - 1].1 {
                    left_pos += 1;
                }
                if values[split_at - 1].0 == values[split_at].0 {
                    continue;
                }
                let threshold = (values[split_at - 1].0 + values[split_at].0) / 2.0;
                let left_total = split_at;
                let right_total = total - split_at;
                let weighted = (left_total as f64 * gini(left_pos, left_total)
                    + right_total as f64 * gini(total_pos - left_pos, right_total))
                    / total as f64;
                if weighted + 1e-12 < parent_gini
                    && best.is_none_or(|(impurity, _, _)| weighted < impurity)
                {
                    best = Some((weighted, feature, threshold));
                }
            }
        }
        best.map(|(_, feature, threshold)| (feature, threshold))
    }
}

impl ForestModel {
    pub fn fit(
        rows: &[[f64; FEATURE_COUNT]],
        is_positive: &[bool],
        n_trees: usize,
        features_per_split: usize,
        seed: u64,
    ) -> ForestModel {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let trees = (0..n_trees)
            .map(|_| {
                let mut rng = ChaCha8Rng::seed_from_u64(master.random());
                let bootstrap: Vec<usize> =
                    (0..rows.len()).map(|_| rng.random_range(0..rows.len())).collect();
                let mut builder = TreeBuilder {
                    rows,
                    is_positive,
                    features_per_split,
                    nodes: Vec::new(),
                };
                builder.build(&bootstrap, &mut rng);
                Tree {
                    nodes: builder.nodes,
                }
            })
            .collect();
        ForestModel { trees }
    }

    /// Fraction of trees voting for the positive class.
    pub fn score_positive(&self, row: &[f64; FEATURE_COUNT]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.vote(row)).count();
        votes as f64 / self.trees.len() as f64
    }
}
