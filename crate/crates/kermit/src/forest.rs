//! Random-forest ensembles for the workload and transition classifiers:
//! bootstrap-sampled trees with axis-aligned Gini splits, deterministic for
//! a fixed seed, serialized as a versioned structured text file.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledInstance;
use crate::telemetry::AnalyticWindow;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("training set is empty or has fewer than 2 instances")]
    EmptyTrainingSet,
    #[error("input has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model file is not readable: {0}")]
    BadModelFile(String),
}

/// Forest hyper-parameters. `features_per_split` of `None` means
/// ceil(sqrt(feature count)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestHyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub features_per_split: Option<usize>,
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        Self { n_trees: 50, max_depth: 12, min_leaf: 2, features_per_split: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { counts: BTreeMap<u32, u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, features: &[f64]) -> u32 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if features[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { counts } => {
                    // Majority class, smallest label on ties.
                    return counts
                        .iter()
                        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                        .map(|(&l, _)| l)
                        .expect("leaf holds at least one sample");
                }
            }
        }
    }
}

const MODEL_FORMAT_VERSION: u32 = 1;

/// A trained forest. Prediction is a majority vote over the trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub n_features: usize,
    pub classes: Vec<u32>,
    pub hyperparams: ForestHyperparams,
    pub seed: u64,
    pub oob_accuracy: Option<f64>,
    trees: Vec<Tree>,
}

impl ForestModel {
    pub fn to_model_file(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization")
    }

    pub fn from_model_file(text: &str) -> Result<Self, ForestError> {
        let model: ForestModel =
            serde_json::from_str(text).map_err(|e| ForestError::BadModelFile(e.to_string()))?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(ForestError::BadModelFile(format!(
                "unsupported model version {}",
                model.version
            )));
        }
        Ok(model)
    }
}

fn gini(counts: &BTreeMap<u32, u32>, total: f64) -> f64 {
    let mut sum = 0.0;
    for &c in counts.values() {
        let p = c as f64 / total;
        sum += p * p;
    }
    1.0 - sum
}

struct TreeBuilder<'a> {
    data: &'a [LabeledInstance],
    hp: ForestHyperparams,
    mtry: usize,
    nodes: Vec<Node>,
}

impl<'a> TreeBuilder<'a> {
    fn build(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha20Rng) -> usize {
        let counts = class_counts(self.data, &rows);
        let node_gini = gini(&counts, rows.len() as f64);
        if depth >= self.hp.max_depth || counts.len() == 1 || rows.len() < 2 * self.hp.min_leaf {
            return self.leaf(counts);
        }
        let Some((feature, threshold)) = self.best_split(&rows, node_gini, rng) else {
            return self.leaf(counts);
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.data[r].features[feature] <= threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: BTreeMap::new() }); // placeholder
        let left = self.build(left_rows, depth + 1, rng);
        let right = self.build(right_rows, depth + 1, rng);
        self.nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }

    fn leaf(&mut self, counts: BTreeMap<u32, u32>) -> usize {
        self.nodes.push(Node::Leaf { counts });
        self.nodes.len() - 1
    }

    /// Best Gini split over a random feature subset. Candidate thresholds
    /// are midpoints between consecutive distinct values. Strictly-better
    /// comparisons keep the first candidate found, which makes the whole
    /// construction deterministic for a fixed seed.
    fn best_split(
        &self,
        rows: &[usize],
        node_gini: f64,
        rng: &mut ChaCha20Rng,
    ) -> Option<(usize, f64)> {
        let d = self.data[rows[0]].features.len();
        let mut features: Vec<usize> = (0..d).collect();
        // Partial Fisher-Yates: the first mtry entries are the sample.
        for i in 0..self.mtry.min(d) {
            let j = rng.gen_range(i..d);
            features.swap(i, j);
        }
        features.truncate(self.mtry.min(d));

        let mut best: Option<(f64, usize, f64)> = None;
        let mut values: Vec<(f64, u32)> = Vec::with_capacity(rows.len());
        for &feature in &features {
            values.clear();
            values.extend(
                rows.iter()
                    .map(|&r| (self.data[r].features[feature], self.data[r].label)),
            );
            values.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let total = values.len() as f64;
            let mut left: BTreeMap<u32, u32> = BTreeMap::new();
            let mut right = class_counts(self.data, rows);
            for i in 0..values.len() - 1 {
                let (v, label) = values[i];
                *left.entry(label).or_insert(0) += 1;
                let r = right.get_mut(&label).expect("label present on the right");
                *r -= 1;
                if *r == 0 {
                    right.remove(&label);
                }
                let next = values[i + 1].0;
                if next == v {
                    continue;
                }
                let n_left = (i + 1) as f64;
                let n_right = total - n_left;
                if (n_left as usize) < self.hp.min_leaf || (n_right as usize) < self.hp.min_leaf {
                    continue;
                }
                let weighted =
                    (n_left * gini(&left, n_left) + n_right * gini(&right, n_right)) / total;
                if weighted + 1e-12 < best.map_or(node_gini, |(g, _, _)| g) {
                    best = Some((weighted, feature, 0.5 * (v + next)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

fn class_counts(data: &[LabeledInstance], rows: &[usize]) -> BTreeMap<u32, u32> {
    let mut counts = BTreeMap::new();
    for &r in rows {
        *counts.entry(data[r].label).or_insert(0) += 1;
    }
    counts
}

/// Train a forest on labeled instances. Deterministic for fixed
/// (data order, hyper-parameters, seed). Each tree gets a bootstrap sample;
/// out-of-bag votes produce the stored `oob_accuracy`.
pub fn train_forest(
    data: &[LabeledInstance],
    hp: ForestHyperparams,
    seed: u64,
) -> Result<ForestModel, ForestError> {
    if data.len() < 2 {
        return Err(ForestError::EmptyTrainingSet);
    }
    let d = data[0].features.len();
    for inst in data {
        if inst.features.len() != d {
            return Err(ForestError::DimensionMismatch { expected: d, got: inst.features.len() });
        }
    }
    let mtry = hp
        .features_per_split
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d);
    let mut classes: Vec<u32> = data.iter().map(|i| i.label).collect();
    classes.sort_unstable();
    classes.dedup();

    let mut trees = Vec::with_capacity(hp.n_trees);
    let mut oob_votes: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); data.len()];
    for k in 0..hp.n_trees {
        let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let mut in_bag = vec![false; data.len()];
        let rows: Vec<usize> = (0..data.len())
            .map(|_| {
                let r = rng.gen_range(0..data.len());
                in_bag[r] = true;
                r
            })
            .collect();
        let mut builder = TreeBuilder { data, hp, mtry, nodes: Vec::new() };
        builder.build(rows, 0, &mut rng);
        let tree = Tree { nodes: builder.nodes };
        for (i, inst) in data.iter().enumerate() {
            if !in_bag[i] {
                *oob_votes[i].entry(tree.predict(&inst.features)).or_insert(0) += 1;
            }
        }
        trees.push(tree);
    }

    let mut covered = 0usize;
    let mut correct = 0usize;
    for (votes, inst) in oob_votes.iter().zip(data) {
        if votes.is_empty() {
            continue;
        }
        covered += 1;
        let vote = votes
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&l, _)| l)
            .unwrap();
        if vote == inst.label {
            correct += 1;
        }
    }
    let oob_accuracy = (covered > 0).then(|| correct as f64 / covered as f64);

    Ok(ForestModel {
        version: MODEL_FORMAT_VERSION,
        n_features: d,
        classes,
        hyperparams: hp,
        seed,
        oob_accuracy,
        trees,
    })
}

/// Vote over the trees: plurality label and its vote fraction. Ties break
/// to the smallest label.
pub fn classify_features(model: &ForestModel, features: &[f64]) -> Result<(u32, f64), ForestError> {
    if features.len() != model.n_features {
        return Err(ForestError::DimensionMismatch {
            expected: model.n_features,
            got: features.len(),
        });
    }
    let mut votes: BTreeMap<u32, u32> = BTreeMap::new();
    for tree in &model.trees {
        *votes.entry(tree.predict(features)).or_insert(0) += 1;
    }
    let (&label, &count) = votes
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .expect("at least one tree");
    Ok((label, count as f64 / model.trees.len() as f64))
}

/// Classify one analytic window.
pub fn classify_window(model: &ForestModel, window: &AnalyticWindow) -> Result<(u32, f64), ForestError> {
    classify_features(model, &window.features)
}

/// Classify one flattened rate-window subsequence.
pub fn classify_transition(model: &ForestModel, flattened: &[f64]) -> Result<(u32, f64), ForestError> {
    classify_features(model, flattened)
}

/// Evaluation summary over a labeled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Cluster purity of the predicted partition: each predicted-label group
    /// contributes its majority true class.
    pub purity: f64,
    /// confusion[(truth, predicted)] = count.
    pub confusion: BTreeMap<(u32, u32), u32>,
}

pub fn evaluate(model: &ForestModel, labeled: &[LabeledInstance]) -> Result<Evaluation, ForestError> {
    if labeled.is_empty() {
        return Err(ForestError::EmptyTrainingSet);
    }
    let mut confusion: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    let mut groups: BTreeMap<u32, BTreeMap<u32, u32>> = BTreeMap::new();
    let mut correct = 0usize;
    for inst in labeled {
        let (pred, _) = classify_features(model, &inst.features)?;
        *confusion.entry((inst.label, pred)).or_insert(0) += 1;
        *groups.entry(pred).or_default().entry(inst.label).or_insert(0) += 1;
        if pred == inst.label {
            correct += 1;
        }
    }
    let purity: u32 = groups
        .values()
        .map(|truths| truths.values().copied().max().unwrap_or(0))
        .sum();
    Ok(Evaluation {
        accuracy: correct as f64 / labeled.len() as f64,
        purity: purity as f64 / labeled.len() as f64,
        confusion,
    })
}
