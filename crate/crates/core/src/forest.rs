//! Random-forest classifier used to score feature subsets.
//!
//! CART trees split on weighted Gini impurity over a random subset of
//! features at each node; each tree sees a bootstrap resample of the
//! training rows. Tree `t` draws from its own generator seeded with
//! `derive_seed(config.seed, [t])`, so training is deterministic regardless
//! of how trees are scheduled across threads.

use std::str::FromStr;

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, StableRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `max(1, floor(sqrt(p)))`.
    Sqrt,
    All,
    Fixed(usize),
}

impl MaxFeatures {
    pub fn resolve(self, p: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (p as f64).sqrt().floor() as usize,
            MaxFeatures::All => p,
            MaxFeatures::Fixed(k) => k,
        };
        k.clamp(1, p.max(1))
    }
}

impl FromStr for MaxFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "all" => Ok(MaxFeatures::All),
            n => n
                .parse::<usize>()
                .ok()
                .filter(|&k| k >= 1)
                .map(MaxFeatures::Fixed)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("max_features must be sqrt, all or >= 1, got {s:?}"))
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    /// Resample rows with replacement per tree. Disabling it is mostly
    /// useful in tests.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            min_samples_split: 2,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::InvalidArgument("n_trees must be >= 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::InvalidArgument("min_samples_split must be >= 2".into()));
        }
        if let MaxFeatures::Fixed(0) = self.max_features {
            return Err(Error::InvalidArgument("max_features must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: u32,
        /// Training-sample counts per forest class, in `RandomForest::classes` order.
        counts: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Root is `nodes[0]`.
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf(class: u32, counts: Vec<usize>) -> Self {
        Self {
            nodes: vec![Node::Leaf { class, counts }],
        }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> u32 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class, .. } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    /// Sorted ascending.
    pub classes: Vec<u32>,
    pub n_features: usize,
    pub config: TrainConfig,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Majority class, ties to the smallest class.
fn majority(counts: &[usize], classes: &[u32]) -> u32 {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    classes[best]
}

/// Grows one tree over a bootstrap sample. Every feature keeps its own
/// ordering of the sample, derived from the forest-wide sort; splitting a
/// node stably partitions each ordering, so a node always owns the same
/// contiguous range `start..end` in every ordering and no node re-sorts.
struct TreeBuilder<'a> {
    /// Column-major copy of the training matrix.
    columns: &'a [f64],
    /// `sorted_rows[f * n_rows..]`: training rows sorted by feature `f`.
    sorted_rows: &'a [usize],
    n_rows: usize,
    n_cols: usize,
    /// Class index per training row.
    y: &'a [usize],
    classes: &'a [u32],
    config: &'a TrainConfig,
    mtry: usize,
    nodes: Vec<Node>,
    /// Training row of each bootstrap draw.
    sample: Vec<usize>,
    /// Column-major feature values and class index per draw.
    draw_values: Vec<f64>,
    draw_class: Vec<usize>,
    /// `order[f * n + i]`: draws sorted by feature `f` (n = sample size).
    order: Vec<usize>,
    goes_left: Vec<bool>,
    scratch: Vec<usize>,
    features: Vec<usize>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl<'a> TreeBuilder<'a> {
    fn value(&self, feature: usize, draw: usize) -> f64 {
        self.draw_values[feature * self.sample.len() + draw]
    }

    /// Expands the forest-wide row orderings into per-feature orderings of
    /// the bootstrap draws.
    fn presort(&mut self) {
        let n = self.sample.len();
        let mut offsets = vec![0usize; self.n_rows + 1];
        for &row in &self.sample {
            offsets[row + 1] += 1;
        }
        for i in 0..self.n_rows {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut by_row = vec![0usize; n];
        for (d, &row) in self.sample.iter().enumerate() {
            by_row[fill[row]] = d;
            fill[row] += 1;
        }
        let (columns, n_rows, sample) = (self.columns, self.n_rows, &self.sample);
        self.draw_values = (0..self.n_cols)
            .flat_map(|f| sample.iter().map(move |&row| columns[f * n_rows + row]))
            .collect();
        self.draw_class = self.sample.iter().map(|&row| self.y[row]).collect();
        self.order = Vec::with_capacity(n * self.n_cols);
        for f in 0..self.n_cols {
            for &row in &self.sorted_rows[f * self.n_rows..(f + 1) * self.n_rows] {
                self.order.extend_from_slice(&by_row[offsets[row]..offsets[row + 1]]);
            }
        }
    }

    fn counts(&self, start: usize, end: usize) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for &d in &self.order[start..end] {
            counts[self.draw_class[d]] += 1;
        }
        counts
    }

    fn best_split(&mut self, start: usize, end: usize, counts: &[usize], rng: &mut StableRng) -> Option<BestSplit> {
        let p = self.n_cols;
        let total = self.sample.len();
        let n = end - start;
        // Partial Fisher-Yates over the persistent feature buffer.
        for i in 0..self.mtry {
            let j = rng.gen_range(i..p);
            self.features.swap(i, j);
        }
        let mut best: Option<BestSplit> = None;
        let k = counts.len();
        let mut left = vec![0usize; k];
        let mut right = vec![0usize; k];
        for fi in 0..self.mtry {
            let f = self.features[fi];
            let sorted = &self.order[f * total + start..f * total + end];
            if self.value(f, sorted[0]) == self.value(f, sorted[n - 1]) {
                continue;
            }
            left.iter_mut().for_each(|c| *c = 0);
            right.copy_from_slice(counts);
            // Weighted child impurity is 1 - (Σ L²/nL + Σ R²/nR) / n; track
            // the bracketed sum incrementally.
            let mut sum_l = 0.0_f64;
            let mut sum_r: f64 = right.iter().map(|&c| (c * c) as f64).sum();
            for i in 0..n - 1 {
                let v = self.value(f, sorted[i]);
                let c = self.draw_class[sorted[i]];
                let (lc, rc) = (left[c] as f64, right[c] as f64);
                sum_l += 2.0 * lc + 1.0;
                sum_r -= 2.0 * rc - 1.0;
                left[c] += 1;
                right[c] -= 1;
                let next = self.value(f, sorted[i + 1]);
                if v == next {
                    continue;
                }
                let nl = (i + 1) as f64;
                let nr = (n - i - 1) as f64;
                let impurity = 1.0 - (sum_l / nl + sum_r / nr) / n as f64;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mid = 0.5 * (v + next);
                    let threshold = if mid < next { mid } else { v };
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }

    /// Stably partitions every ordering of `start..end`; returns the first
    /// index of the right child.
    fn partition(&mut self, start: usize, end: usize, split: &BestSplit) -> usize {
        let total = self.sample.len();
        for d in start..end {
            let draw = self.order[split.feature * total + d];
            self.goes_left[draw] = self.value(split.feature, draw) <= split.threshold;
        }
        let mut mid = start;
        for f in 0..self.n_cols {
            let range = &mut self.order[f * total + start..f * total + end];
            self.scratch.clear();
            let mut w = 0;
            for i in 0..range.len() {
                let d = range[i];
                if self.goes_left[d] {
                    range[w] = d;
                    w += 1;
                } else {
                    self.scratch.push(d);
                }
            }
            range[w..].copy_from_slice(&self.scratch);
            mid = start + w;
        }
        mid
    }

    fn build(&mut self, rng: &mut StableRng) {
        self.presort();
        // Each stack entry is (start, end, depth, slot); slot is the index
        // already reserved in `nodes` for this subtree.
        self.nodes.push(Node::Leaf {
            class: 0,
            counts: Vec::new(),
        });
        let mut stack = vec![(0usize, self.sample.len(), 0usize, 0usize)];
        while let Some((start, end, depth, slot)) = stack.pop() {
            let counts = self.counts(start, end);
            let n = end - start;
            let parent = gini(&counts, n);
            let stop = parent == 0.0
                || n < self.config.min_samples_split
                || self.config.max_depth.is_some_and(|d| depth >= d);
            let split = if stop {
                None
            } else {
                self.best_split(start, end, &counts, rng)
                    .filter(|s| s.impurity < parent - 1e-12)
            };
            let Some(split) = split else {
                self.nodes[slot] = Node::Leaf {
                    class: majority(&counts, self.classes),
                    counts,
                };
                continue;
            };
            let mid = self.partition(start, end, &split);
            let left = self.nodes.len();
            let right = left + 1;
            let placeholder = Node::Leaf {
                class: 0,
                counts: Vec::new(),
            };
            self.nodes.push(placeholder.clone());
            self.nodes.push(placeholder);
            self.nodes[slot] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            };
            stack.push((mid, end, depth + 1, right));
            stack.push((start, mid, depth + 1, left));
        }
    }
}

fn fit_tree(
    x: ArrayView2<f64>,
    columns: &[f64],
    sorted_rows: &[usize],
    y: &[usize],
    classes: &[u32],
    config: &TrainConfig,
    tree_index: usize,
) -> DecisionTree {
    let mut rng = rng_from_seed(derive_seed(config.seed, &[tree_index as u64]));
    let n = x.nrows();
    let sample: Vec<usize> = if config.bootstrap {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut builder = TreeBuilder {
        columns,
        sorted_rows,
        n_rows: n,
        n_cols: x.ncols(),
        y,
        classes,
        config,
        mtry: config.max_features.resolve(x.ncols()),
        nodes: Vec::new(),
        goes_left: vec![false; sample.len()],
        sample,
        draw_values: Vec::new(),
        draw_class: Vec::new(),
        order: Vec::new(),
        scratch: Vec::with_capacity(n),
        features: (0..x.ncols()).collect(),
    };
    builder.build(&mut rng);
    DecisionTree {
        nodes: builder.nodes,
    }
}

impl RandomForest {
    /// Trains on a feature matrix and labels.
    pub fn fit_matrix(x: ArrayView2<f64>, y: &[u32], config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if x.nrows() == 0 || y.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidArgument("no features".into()));
        }
        let mut classes = y.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let yi: Vec<usize> = y
            .iter()
            .map(|c| classes.binary_search(c).expect("class present"))
            .collect();
        let trees = if classes.len() == 1 {
            let counts = vec![y.len()];
            vec![DecisionTree::leaf(classes[0], counts); config.n_trees]
        } else {
            let columns: Vec<f64> = x.t().iter().copied().collect();
            let columns = columns.as_slice();
            let n = x.nrows();
            let mut sorted_rows = Vec::with_capacity(columns.len());
            for col in columns.chunks(n) {
                let mut rows: Vec<usize> = (0..n).collect();
                rows.sort_unstable_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
                sorted_rows.extend(rows);
            }
            let sorted_rows = sorted_rows.as_slice();
            (0..config.n_trees)
                .into_par_iter()
                .map(|t| fit_tree(x, columns, sorted_rows, &yi, &classes, config, t))
                .collect()
        };
        Ok(Self {
            trees,
            classes,
            n_features: x.ncols(),
            config: config.clone(),
        })
    }

    pub fn fit(train: &Dataset, config: &TrainConfig) -> Result<Self> {
        Self::fit_matrix(train.x.view(), &train.y, config)
    }

    /// Builds a forest from prepared trees (sorting `classes`).
    pub fn from_trees(
        trees: Vec<DecisionTree>,
        mut classes: Vec<u32>,
        n_features: usize,
        config: TrainConfig,
    ) -> Self {
        classes.sort_unstable();
        classes.dedup();
        Self {
            trees,
            classes,
            n_features,
            config,
        }
    }

    /// Per-class vote counts for one sample, in `classes` order. Votes for
    /// classes unknown to the forest are ignored.
    pub fn votes(&self, row: ArrayView1<f64>) -> Vec<usize> {
        let mut votes = vec![0; self.classes.len()];
        for t in &self.trees {
            let c = t.predict_row(row);
            if let Ok(i) = self.classes.binary_search(&c) {
                votes[i] += 1;
            }
        }
        votes
    }

    /// Majority vote per row; ties go to the smallest class.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<u32>> {
        if x.ncols() != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                found: x.ncols(),
            });
        }
        Ok(x.rows()
            .into_iter()
            .map(|row| majority(&self.votes(row), &self.classes))
            .collect())
    }
}

/// Fraction of exact matches.
pub fn accuracy(predicted: &[u32], actual: &[u32]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::InvalidArgument("no samples to score".into()));
    }
    let hits = predicted.iter().zip(actual).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / actual.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::Rng;

    fn line_data(n: usize, seed: u64) -> (Array2<f64>, Vec<u32>) {
        let mut rng = rng_from_seed(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = xs.iter().map(|&v| u32::from(v > 0.0)).collect();
        (Array2::from_shape_vec((n, 1), xs).unwrap(), y)
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2], &[3, 4]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 5]).unwrap(), 0.75);
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn single_class_is_constant() {
        let x = array![[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]];
        let f = RandomForest::fit_matrix(x.view(), &[7, 7, 7], &TrainConfig::default()).unwrap();
        let probe = array![[10.0, -3.0], [0.5, 0.5]];
        assert_eq!(f.predict(probe.view()).unwrap(), vec![7, 7]);
    }

    #[test]
    fn threshold_rule_is_learned() {
        let (x, y) = line_data(200, 1);
        let cfg = TrainConfig {
            n_trees: 50,
            seed: 3,
            ..TrainConfig::default()
        };
        let f = RandomForest::fit_matrix(x.view(), &y, &cfg).unwrap();
        let (xt, yt) = line_data(500, 2);
        let acc = accuracy(&f.predict(xt.view()).unwrap(), &yt).unwrap();
        assert!(acc >= 0.98, "accuracy {acc}");
    }

    #[test]
    fn same_seed_same_model() {
        let (x, y) = line_data(100, 5);
        let cfg = TrainConfig {
            n_trees: 10,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = RandomForest::fit_matrix(x.view(), &y, &cfg).unwrap();
        let b = RandomForest::fit_matrix(x.view(), &y, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn predict_rejects_wrong_width() {
        let (x, y) = line_data(20, 5);
        let f = RandomForest::fit_matrix(x.view(), &y, &TrainConfig::default()).unwrap();
        assert!(matches!(
            f.predict(array![[1.0, 2.0]].view()),
            Err(Error::FeatureMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn vote_ties_go_to_smallest_class() {
        let trees = vec![DecisionTree::leaf(5, vec![0, 1]), DecisionTree::leaf(3, vec![1, 0])];
        let f = RandomForest::from_trees(trees, vec![5, 3], 1, TrainConfig::default());
        assert_eq!(f.predict(array![[0.0]].view()).unwrap(), vec![3]);
    }

    #[test]
    fn crafted_three_tree_vote() {
        // Tree 0 splits at 0; trees 1 and 2 are constant.
        let split = DecisionTree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 0.0, left: 1, right: 2 },
                Node::Leaf { class: 1, counts: vec![1, 0, 0] },
                Node::Leaf { class: 2, counts: vec![0, 1, 0] },
            ],
        };
        let trees = vec![split, DecisionTree::leaf(2, vec![0, 1, 0]), DecisionTree::leaf(3, vec![0, 0, 1])];
        let f = RandomForest::from_trees(trees, vec![1, 2, 3], 1, TrainConfig::default());
        let probe = array![[-1.0], [1.0]];
        // -1: votes {1, 2, 3} -> tie -> 1.  1: votes {2, 2, 3} -> 2.
        assert_eq!(f.votes(probe.row(0)), vec![1, 1, 1]);
        assert_eq!(f.votes(probe.row(1)), vec![0, 2, 1]);
        assert_eq!(f.predict(probe.view()).unwrap(), vec![1, 2]);
    }

    #[test]
    fn one_tree_forest_matches_tree() {
        let (x, y) = line_data(60, 9);
        let cfg = TrainConfig {
            n_trees: 1,
            seed: 2,
            ..TrainConfig::default()
        };
        let f = RandomForest::fit_matrix(x.view(), &y, &cfg).unwrap();
        let pred = f.predict(x.view()).unwrap();
        for (row, p) in x.rows().into_iter().zip(pred) {
            assert_eq!(f.trees[0].predict_row(row), p);
        }
    }

    #[test]
    fn leaf_counts_sum_to_training_rows() {
        let (x, y) = line_data(80, 4);
        let cfg = TrainConfig {
            n_trees: 3,
            bootstrap: false,
            ..TrainConfig::default()
        };
        let f = RandomForest::fit_matrix(x.view(), &y, &cfg).unwrap();
        for t in &f.trees {
            let total: usize = t
                .nodes
                .iter()
                .filter_map(|n| match n {
                    Node::Leaf { counts, .. } => Some(counts.iter().sum::<usize>()),
                    _ => None,
                })
                .sum();
            assert_eq!(total, 80);
        }
    }

    #[test]
    fn max_depth_is_respected() {
        let (x, y) = line_data(100, 8);
        let mut noisy = y.clone();
        noisy.iter_mut().step_by(7).for_each(|c| *c = 1 - *c);
        let cfg = TrainConfig {
            n_trees: 2,
            max_depth: Some(2),
            ..TrainConfig::default()
        };
        let f = RandomForest::fit_matrix(x.view(), &noisy, &cfg).unwrap();
        assert!(f.trees.iter().all(|t| t.depth() <= 2));
    }
}
