//! Entropy-criterion decision tree grown on a bootstrap sample.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Label};

/// Flat node record; leaves have no feature, threshold or children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature_index: Option<usize>,
    pub threshold: Option<f64>,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub leaf_class: Option<Label>,
    /// Bootstrap sample counts reaching this node, `[swim_bladder, no_swim_bladder]`.
    pub class_counts: [usize; 2],
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.feature_index.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub features_per_split: usize,
}

pub(crate) fn entropy(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Majority class; ties go to the abnormal class.
fn majority(counts: [usize; 2]) -> Label {
    if counts[0] > counts[1] {
        Label::SwimBladder
    } else {
        Label::NoSwimBladder
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl DecisionTree {
    /// Grows a tree on `rows` (indices into `data`, repeats allowed).
    pub(crate) fn grow<R: Rng>(data: &Dataset, rows: Vec<usize>, params: &GrowParams, rng: &mut R) -> Self {
        let mut tree = DecisionTree { nodes: Vec::new() };
        tree.build(data, rows, 0, params, rng);
        tree
    }

    fn counts(data: &Dataset, rows: &[usize]) -> [usize; 2] {
        let mut c = [0; 2];
        for &r in rows {
            c[data.samples[r].label.index()] += 1;
        }
        c
    }

    fn build<R: Rng>(&mut self, data: &Dataset, rows: Vec<usize>, depth: usize, p: &GrowParams, rng: &mut R) -> usize {
        let counts = Self::counts(data, &rows);
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            feature_index: None,
            threshold: None,
            left: None,
            right: None,
            leaf_class: Some(majority(counts)),
            class_counts: counts,
        });
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= p.max_depth || rows.len() < p.min_samples_split {
            return id;
        }
        let Some(split) = self.best_split(data, &rows, counts, p, rng) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| data.samples[r].features[split.feature] <= split.threshold);
        let left = self.build(data, left_rows, depth + 1, p, rng);
        let right = self.build(data, right_rows, depth + 1, p, rng);
        let node = &mut self.nodes[id];
        node.feature_index = Some(split.feature);
        node.threshold = Some(split.threshold);
        node.left = Some(left);
        node.right = Some(right);
        node.leaf_class = None;
        id
    }

    fn best_split<R: Rng>(
        &self,
        data: &Dataset,
        rows: &[usize],
        counts: [usize; 2],
        p: &GrowParams,
        rng: &mut R,
    ) -> Option<Split> {
        let d = data.n_features();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(rng);
        let parent = entropy(counts);
        let n = rows.len() as f64;
        let mut best: Option<Split> = None;
        let mut values: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        for (visited, &f) in features.iter().enumerate() {
            // Keep drawing features past the quota until a usable split exists.
            if visited >= p.features_per_split && best.is_some() {
                break;
            }
            values.clear();
            values.extend(rows.iter().map(|&r| (data.samples[r].features[f], data.samples[r].label.index())));
            values.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut left = [0usize; 2];
            for i in 0..values.len() - 1 {
                left[values[i].1] += 1;
                if values[i].0 == values[i + 1].0 {
                    continue;
                }
                let nl = i + 1;
                let nr = values.len() - nl;
                if nl < p.min_samples_leaf || nr < p.min_samples_leaf {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1]];
                let gain = parent - (nl as f64 / n) * entropy(left) - (nr as f64 / n) * entropy(right);
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Split {
                        feature: f,
                        threshold: 0.5 * (values[i].0 + values[i + 1].0),
                        gain,
                    });
                }
            }
        }
        best
    }

    pub fn predict(&self, features: &[f64]) -> Label {
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            match (node.feature_index, node.threshold, node.left, node.right) {
                (Some(f), Some(t), Some(l), Some(r)) => i = if features[f] <= t { l } else { r },
                _ => return node.leaf_class.unwrap_or(Label::NoSwimBladder),
            }
        }
    }

    /// Depth of every node (root = 0).
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            for c in [node.left, node.right].into_iter().flatten() {
                depth[c] = depth[i] + 1;
            }
        }
        depth
    }
}
